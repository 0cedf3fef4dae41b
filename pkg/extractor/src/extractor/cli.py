"""Command line for the embedding extractor."""

from __future__ import annotations

import argparse
import sys

from .extract import ExtractionSpec, extract


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extract",
        description=(
            "Extract pooled per-layer embeddings and softmax predictions "
            "from a PyTorch vision model into an HSTE manifest directory."
        ),
    )
    parser.add_argument("--model", required=True,
                        help="torchvision architecture name or saved .pt module")
    parser.add_argument("--data", required=True,
                        help="dataset directory with one subdirectory per class")
    parser.add_argument("--layers", default=None,
                        help="comma-separated layer names; default: block-final "
                             "layers excluding the first block")
    parser.add_argument("--out", required=True)
    parser.add_argument("--batch", type=int, default=32)
    parser.add_argument("--image-size", type=int, default=224)
    parser.add_argument("--weights", default=None,
                        help="optional state-dict file for a named architecture")
    parser.add_argument("--seed", type=int, default=0,
                        help="init seed for unweighted named architectures")
    return parser


def run(argv: list[str]) -> int:
    args = build_parser().parse_args(argv)
    spec = ExtractionSpec(
        model=args.model,
        data_dir=args.data,
        out_dir=args.out,
        layers=args.layers.split(",") if args.layers else [],
        batch_size=args.batch,
        image_size=args.image_size,
        weights=args.weights,
        seed=args.seed,
    )
    try:
        manifest = extract(spec)
    except (ValueError, OSError) as exc:
        print(f"extract: error: {exc}", file=sys.stderr)
        return 1
    print(manifest)
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
