import sys

from dotenv import load_dotenv

from slitwave.gateway.cli import main as cli_main


def main() -> int:
    load_dotenv()
    return cli_main(sys.argv[1:])


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        sys.exit(130)
