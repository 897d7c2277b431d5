"""Write a planted-rule dataset (train/valid/test TSVs) for desk-scale runs."""

import argparse
import logging

from rmna.infra.synthetic import PlantedSpec, generate_planted, write_planted


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out", help="output directory")
    parser.add_argument("--entities", type=int, default=300)
    parser.add_argument("--rate", type=float, default=0.9)
    parser.add_argument("--noise", type=float, default=0.1)
    parser.add_argument("--holdout", type=float, default=0.1)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s [%(name)s] %(message)s")
    spec = PlantedSpec(
        entities=args.entities, rate=args.rate, noise=args.noise, holdout=args.holdout, seed=args.seed
    )
    kg = generate_planted(spec)
    for split, path in write_planted(kg, args.out).items():
        print(f"{split}: {path}")


if __name__ == "__main__":
    main()
