#!/usr/bin/env python3
"""Convert a MIL benchmark CSV with rows `label,bag,f0,...` (no header) into the
bag CSV read by protomil: header `bag_id,label,f0,...,f{L-1}`, one instance
per row.

Labels other than 1 (for example -1 or 0) become 0. A bag must carry a single
label across its rows.
"""

import argparse
import csv
import sys


def convert(src, dst):
    reader = csv.reader(src)
    writer = None
    labels = {}
    width = None
    for line_no, row in enumerate(reader, start=1):
        if not row:
            continue
        label_text, bag, *features = (field.strip() for field in row)
        if width is None:
            width = len(features)
            writer = csv.writer(dst, lineterminator="\n")
            writer.writerow(["bag_id", "label"] + [f"f{j}" for j in range(width)])
        elif len(features) != width:
            raise ValueError(f"line {line_no}: expected {width} features, got {len(features)}")
        label = 1 if float(label_text) == 1.0 else 0
        if labels.setdefault(bag, label) != label:
            raise ValueError(f"line {line_no}: conflicting labels for bag {bag}")
        writer.writerow([bag, label] + features)
    if width is None:
        raise ValueError("empty input")
    return len(labels), width


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("input", help="label,bag,features CSV")
    parser.add_argument("output", help="bag CSV to write")
    args = parser.parse_args()
    try:
        with open(args.input, newline="") as src, open(args.output, "w", newline="") as dst:
            bags, width = convert(src, dst)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"{bags} bags, {width} features -> {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
