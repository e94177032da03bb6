import sys

from .wac_console import WacConsole


def main() -> None:
    sys.exit(WacConsole(sys.argv[1:]).execute())


if __name__ == "__main__":
    main()
