import argparse
import sys

from . import ExportError, export


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="vgg16-export",
        description="Convert a torchvision VGG-16 checkpoint into the engine's "
                    "weight-container format plus a parity fixture.",
    )
    parser.add_argument("--out", required=True, help="container directory to write")
    parser.add_argument("--source", default="imagenet", choices=["imagenet", "random"],
                        help="checkpoint to export (default: imagenet)")
    args = parser.parse_args(argv)
    try:
        summary = export(args.source, args.out)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"exported {summary['tensors']} tensors ({summary['bytes']} bytes) "
          f"from source '{summary['source']}' -> {summary['out']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
