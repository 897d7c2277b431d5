import os
from pathlib import Path

import pytest

from rmna.domain.errors import ParseError, UnknownSymbolError
from rmna.domain.graph import Vocabulary
from rmna.infra.triples_tsv import load_dataset, load_triples, write_triples


def test_load_dedups_and_interns(write_tsv):
    p = write_tsv("train.txt", [("a", "r", "b"), ("a", "r", "b"), ("a", "s", "c")])
    kg = load_triples(p)
    assert kg.entity_count == 3
    assert kg.relation_count == 2
    assert len(kg) == 2
    assert kg.vocab.entities == ("a", "b", "c")


def test_empty_file_gives_empty_graph(tmp_path):
    p = tmp_path / "empty.txt"
    p.write_text("", encoding="utf-8")
    kg = load_triples(p)
    assert len(kg) == 0
    assert kg.entity_count == 0


def test_comments_and_blank_lines_are_skipped(tmp_path):
    p = tmp_path / "train.txt"
    p.write_text("# header\n\na\tr\tb\n", encoding="utf-8")
    assert len(load_triples(p)) == 1


def test_wrong_field_count_reports_line(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("a\tr\tb\nc\td\n", encoding="utf-8")
    with pytest.raises(ParseError) as exc:
        load_triples(p)
    assert exc.value.line_no == 2
    assert str(p) in str(exc.value)


def test_missing_file_is_a_parse_error(tmp_path):
    with pytest.raises(ParseError):
        load_triples(tmp_path / "nope.txt")


@pytest.mark.parametrize("label", ["inv_r", "inv_", "self_loop"])
def test_generated_relation_labels_are_rejected(write_tsv, label):
    p = write_tsv("train.txt", [("a", "r", "b"), ("b", label, "a")])
    with pytest.raises(ParseError) as exc:
        load_triples(p)
    assert exc.value.line_no == 2


def test_labels_that_only_contain_the_prefix_load(write_tsv):
    kg = load_triples(write_tsv("train.txt", [("a", "has_inv_part", "b"), ("a", "invert", "b")]))
    assert kg.vocab.relations == ("has_inv_part", "invert")


def test_reuse_mode_rejects_unseen_labels(write_tsv):
    vocab = Vocabulary(["a", "b"], ["r"])
    p = write_tsv("test.txt", [("a", "r", "b"), ("a", "r", "zzz")])
    with pytest.raises(UnknownSymbolError) as exc:
        load_triples(p, vocab, "reuse")
    assert exc.value.line_no == 2


def test_dataset_shares_one_vocabulary(write_tsv):
    train = write_tsv("train.txt", [("a", "r", "b")])
    valid = write_tsv("valid.txt", [("b", "r", "c")])
    test = write_tsv("test.txt", [("c", "s", "d")])
    ds = load_dataset(train, valid, test)
    assert ds.vocab.entity_count == 4
    assert ds.vocab.relation_count == 2
    assert ds.train.entity_count == ds.test.entity_count == 4
    assert ds.train.vocab is ds.test.vocab


def test_write_triples_round_trip(write_tsv, tmp_path, make_kg):
    kg = make_kg([("x", "p", "y"), ("y", "q", "z")], inverse=True)
    out = tmp_path / "out" / "triples.txt"
    assert write_triples(kg, out) == 2
    again = load_triples(out)
    assert again.vocab.entities == kg.vocab.entities
    assert again.triples.tolist() == kg.triples[kg.triples[:, 1] < 2].tolist()


@pytest.mark.dataset
@pytest.mark.parametrize(
    "name, entities, relations, sizes",
    [
        ("FB15k-237", 14541, 237, (272115, 17535, 20466)),
        ("WN18RR", 40943, 11, (86835, 3034, 3134)),
    ],
)
def test_benchmark_statistics(name, entities, relations, sizes):
    root = os.getenv("RMNA_DATA_DIR")
    if not root or not (Path(root) / name / "train.txt").is_file():
        pytest.skip(f"{name} not available under RMNA_DATA_DIR")
    base = Path(root) / name
    ds = load_dataset(base / "train.txt", base / "valid.txt", base / "test.txt")
    assert ds.vocab.entity_count == entities
    assert ds.vocab.relation_count == relations
    assert (len(ds.train), len(ds.valid), len(ds.test)) == sizes
