import logging
from typing import Optional, Sequence

from dotenv import load_dotenv

from rmna.config import log_level_from_env
from rmna.delivery.cli import dispatch, parse_args

LOG_FORMAT = "%(asctime)s %(levelname)s [%(name)s] %(message)s"


def main(argv: Optional[Sequence[str]] = None) -> int:
    # Load env before reading RMNA_* knobs
    load_dotenv()
    args = parse_args(argv)
    level = logging.DEBUG if args.verbose else log_level_from_env()
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)
    return dispatch(args)


if __name__ == "__main__":
    raise SystemExit(main())
