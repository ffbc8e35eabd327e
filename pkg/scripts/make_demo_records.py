"""Write a few toy CSV records for the preprocess command.

Each record gets a signal CSV (sample_index,<lead>...) and an annotation CSV
(sample_index,symbol) in the layout the ingestion step expects. Beats are
Gaussian bumps on a noisy baseline; symbols cycle through the five mapped
groups. Prints a ready-to-run preprocess command when done.
"""

import argparse
from pathlib import Path

import numpy as np

SYMBOLS = ["N", "A", "V", "F", "/"]


def write_record(sig_dir: Path, ann_dir: Path, name: str,
                 leads: tuple[str, ...], beats: int, seed: int) -> None:
    g = np.random.Generator(np.random.PCG64(seed))
    spacing = 360
    n = spacing * (beats + 2)
    t = np.arange(n)
    signal = 0.05 * g.standard_normal((len(leads), n))
    peaks = spacing * (1 + np.arange(beats))
    symbols = [SYMBOLS[i % len(SYMBOLS)] for i in range(beats)]
    for j in range(len(leads)):
        for p, sym in zip(peaks, symbols):
            width = 8.0 if sym in ("N", "A") else 16.0
            height = 1.0 if sym != "V" else 1.6
            signal[j] += height * np.exp(-0.5 * ((t - p) / width) ** 2)

    header = "sample_index," + ",".join(leads)
    rows = [header]
    rows += [f"{i}," + ",".join(f"{signal[j, i]:.6f}" for j in range(len(leads)))
             for i in range(n)]
    (sig_dir / f"{name}.csv").write_text("\n".join(rows) + "\n")
    ann = ["sample_index,symbol"] + [f"{p},{s}" for p, s in zip(peaks, symbols)]
    # Annotations pair with signals by file name, in a parallel directory.
    (ann_dir / f"{name}.csv").write_text("\n".join(ann) + "\n")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="demo_records")
    ap.add_argument("--records", type=int, default=3)
    ap.add_argument("--beats", type=int, default=30)
    ap.add_argument("--leads", default="MLII,V1")
    args = ap.parse_args()

    leads = tuple(s.strip() for s in args.leads.split(",") if s.strip())
    sig_dir = Path(args.out_dir) / "signals"
    ann_dir = Path(args.out_dir) / "annotations"
    sig_dir.mkdir(parents=True, exist_ok=True)
    ann_dir.mkdir(parents=True, exist_ok=True)
    for i in range(args.records):
        write_record(sig_dir, ann_dir, f"rec{i:03d}", leads, args.beats,
                     seed=1000 + i)
    print(f"wrote {args.records} records ({args.beats} beats each) under {args.out_dir}/")
    print("next:")
    print(f"  cardionas preprocess --db mitbih --signals {sig_dir} "
          f"--annotations {ann_dir} --leads {args.leads} --out demo_beats.hdds")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
