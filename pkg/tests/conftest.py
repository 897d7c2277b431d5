from typing import Callable, Iterable, Tuple

import numpy as np
import pytest

from rmna.domain.graph import KnowledgeGraph, Vocabulary, add_inverse_relations
from rmna.infra.synthetic import PlantedSpec, generate_planted, write_planted

LabelRows = Iterable[Tuple[str, str, str]]

T2_ROWS = [
    ("a", "r1", "b"),
    ("b", "r2", "c"),
    ("a", "r", "c"),
    ("d", "r1", "e2"),
    ("e2", "r2", "f"),
]

SHAKESPEARE_ROWS = [
    ("William_Shakespeare", "masterpiece", "Hamlet"),
    ("Hamlet", "theme", "drama"),
    ("William_Shakespeare", "nationality", "England"),
    ("Christopher_Marlowe", "masterpiece", "Doctor_Faustus"),
    ("Doctor_Faustus", "theme", "drama"),
    ("Christopher_Marlowe", "creative_style", "drama"),
    ("Ben_Jonson", "masterpiece", "Volpone"),
    ("Volpone", "theme", "comedy"),
    ("Ben_Jonson", "creative_style", "comedy"),
]


def build_kg(rows: LabelRows, *, inverse: bool = False, extra_entities: Iterable[str] = ()) -> KnowledgeGraph:
    vocab = Vocabulary()
    ids = [(vocab.intern_entity(h), vocab.intern_relation(r), vocab.intern_entity(t)) for h, r, t in rows]
    for label in extra_entities:
        vocab.intern_entity(label)
    kg = KnowledgeGraph(vocab, np.asarray(ids, dtype=np.int64).reshape(-1, 3))
    return add_inverse_relations(kg) if inverse else kg


@pytest.fixture
def make_kg() -> Callable[..., KnowledgeGraph]:
    return build_kg


@pytest.fixture
def t2_graph() -> KnowledgeGraph:
    return build_kg(T2_ROWS)


@pytest.fixture
def shakespeare_graph() -> KnowledgeGraph:
    return build_kg(SHAKESPEARE_ROWS)


@pytest.fixture
def chain_graph() -> KnowledgeGraph:
    """10 entities on a chain with two alternating relations."""
    rows = [(f"n{i}", "next" if i % 2 == 0 else "step", f"n{i + 1}") for i in range(9)]
    return build_kg(rows)


@pytest.fixture
def write_tsv(tmp_path):
    def write(name: str, rows: LabelRows):
        p = tmp_path / name
        p.write_text("".join(f"{h}\t{r}\t{t}\n" for h, r, t in rows), encoding="utf-8")
        return p

    return write


TOY_CONFIG = """\
seed = 3
work_dir = run
data.name = planted
data.train = data/train.txt
data.valid = data/valid.txt
data.test = data/test.txt
rules.l_max = 2
rules.hc_min = 0.3
rules.conf_min = 0.3
pretrain.dim = 8
pretrain.epochs = 5
pretrain.batch_size = 64
pretrain.patience = 0
aggregator.num_attention_heads = 2
aggregator.num_self_attention_heads = 2
aggregator.dim1 = 6
aggregator.dim2 = 6
aggregator.query_dim1 = 3
aggregator.key_dim1 = 3
aggregator.value_dim1 = 3
aggregator.query_dim2 = 3
aggregator.key_dim2 = 3
aggregator.value_dim2 = 3
aggregator.epochs = 2
aggregator.batch_size = 64
decoder.epochs = 2
decoder.num_kernels = 3
decoder.batch_size = 64
"""


@pytest.fixture
def toy_config(tmp_path):
    """Small planted dataset plus a config file pointing at it; returns the config path."""
    write_planted(generate_planted(PlantedSpec(entities=40, holdout=0.2, seed=5)), tmp_path / "data")
    path = tmp_path / "toy.cfg"
    path.write_text(TOY_CONFIG, encoding="utf-8")
    return path
