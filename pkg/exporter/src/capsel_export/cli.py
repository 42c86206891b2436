"""capsel-export: encode an image folder (and captions) into engine files.

    capsel-export images   --dataset DIR --output-dir DIR
    capsel-export captions --dataset DIR --output-dir DIR --captions FILE
                           [--prompt "It's a snowy day."]

Flags mirror the manifest one to one; both commands are idempotent for
the built-in deterministic encoders.
"""

from __future__ import annotations

import argparse
import sys

from .encoders import list_encoders
from .errors import ExportError
from .export import export_caption_embeddings, export_image_embeddings
from .manifest import ExportManifest


def _add_manifest_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--dataset", required=True, help="root folder, one subfolder per class")
    sub.add_argument("--output-dir", required=True)
    sub.add_argument("--image-encoder", default="patch-stats-64")
    sub.add_argument("--text-encoder", default="hashed-text-64")
    sub.add_argument("--resize", type=int, default=224, metavar="SIDE",
                     help="square resize applied before encoding (default 224)")
    sub.add_argument("--batch-size", type=int, default=32)
    sub.add_argument("--allow-nondeterministic", action="store_true",
                     help="accept encoders that cannot promise byte-identical re-export")


def _manifest(args) -> ExportManifest:
    return ExportManifest(
        dataset_dir=args.dataset,
        output_dir=args.output_dir,
        image_encoder=args.image_encoder,
        text_encoder=args.text_encoder,
        resize=(args.resize, args.resize),
        batch_size=args.batch_size,
        deterministic=not args.allow_nondeterministic,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="capsel-export", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    commands = parser.add_subparsers(dest="command", required=True)

    images = commands.add_parser("images", help="write embeddings.vcf and labels.vcl")
    _add_manifest_flags(images)

    captions = commands.add_parser("captions", help="write captions.vcf (and prompt.vcf)")
    _add_manifest_flags(captions)
    captions.add_argument("--captions", required=True, help="text file, one caption per image")
    captions.add_argument("--prompt", default=None,
                          help="optional steering phrase, written as a one-row file")

    encoders = commands.add_parser("encoders", help="list registered encoder names")
    _ = encoders
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "images":
            embeddings, labels = export_image_embeddings(_manifest(args))
            print(f"wrote {embeddings} and {labels}")
        elif args.command == "captions":
            captions, prompt = export_caption_embeddings(_manifest(args), args.captions,
                                                         prompt=args.prompt)
            print(f"wrote {captions}" + (f" and {prompt}" if prompt else ""))
        else:
            for kind, names in list_encoders().items():
                print(f"{kind}: {', '.join(names)}")
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
