#!/usr/bin/env python3
"""Chunk size vs compression ratio: run the study, save CSV, draw the curve.

Writes ``compression.csv`` next to this script and, when matplotlib is
available, ``compression.png``; otherwise renders the curve as text.
Chunking costs compression (smaller blocks give the codec less context);
the curve shows the ratio climbing toward the whole-dataset reference as
chunks grow.
"""
import pathlib
import sys

from streamvault.bench import bench_compression

OUT_DIR = pathlib.Path(__file__).resolve().parent


def main() -> None:
    seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
    report = bench_compression(seed=seed)
    csv_path = OUT_DIR / "compression.csv"
    csv_path.write_text(report.to_csv())
    print(f"wrote {csv_path}")

    whole = report.value("ratio_whole_dataset")
    points = sorted(
        (int(row.metric.rsplit("_", 1)[1]), row.value)
        for row in report.rows if row.metric.startswith("ratio_chunk_"))

    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        width = 48
        top = max(whole, max(v for _, v in points))
        print(f"\nchunk size vs ratio (whole dataset = {whole:.2f}):")
        for size, value in points:
            bar = "#" * round(width * value / top)
            print(f"  {size:>6} | {bar} {value:.2f}")
        return

    sizes = [s for s, _ in points]
    ratios = [v for _, v in points]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(sizes, ratios, marker="o", label="per-chunk compression")
    ax.axhline(whole, linestyle="--", color="gray",
               label=f"whole dataset ({whole:.2f})")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("chunk size (records)")
    ax.set_ylabel("compression ratio")
    ax.set_title(f"Compression vs chunk size (seed {seed})")
    ax.legend()
    fig.tight_layout()
    png_path = OUT_DIR / "compression.png"
    fig.savefig(png_path, dpi=120)
    print(f"wrote {png_path}")


if __name__ == "__main__":
    main()
