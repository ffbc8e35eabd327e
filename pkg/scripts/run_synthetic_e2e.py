"""End-to-end demo on synthetic beats: search, train, evaluate.

Runs the whole loop through the Python API with small defaults, so it
finishes in about a minute on a laptop. Artifacts (dataset, checkpoint,
genotype, model, report) land in --out-dir.
"""

import argparse
import time
from pathlib import Path

from cardionas.metrics import (ConfusionMatrix, render_report,
                               report_from_matrix, report_to_json_text)
from cardionas.network import FinalNetwork, TrainConfig, predict, save_model, train_final
from cardionas.pipeline import SPLIT_TEST, dataset_stats
from cardionas.supernet import SearchConfig, SearchRun
from cardionas.synthetic import make_synthetic_dataset


def parse_args() -> argparse.Namespace:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="e2e_out")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--per-class", type=int, default=100)
    ap.add_argument("--length", type=int, default=300)
    ap.add_argument("--noise", type=float, default=0.3)
    ap.add_argument("--search-epochs", type=int, default=4)
    ap.add_argument("--train-epochs", type=int, default=30)
    ap.add_argument("--batch", type=int, default=16)
    ap.add_argument("--channels", type=int, default=4)
    ap.add_argument("--cells", type=int, default=3)
    ap.add_argument("--layers", type=int, default=3)
    return ap.parse_args()


def main() -> int:
    args = parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    ds = make_synthetic_dataset(seed=args.seed, per_class=args.per_class,
                                length=args.length, noise=args.noise)
    (out / "beats.hdds").write_bytes(ds.to_bytes())
    print(dataset_stats(ds))

    scfg = SearchConfig(epochs=args.search_epochs, batch_size=args.batch,
                        init_channels=args.channels, cells=args.cells,
                        seed=args.seed)
    run = SearchRun(scfg, ds)
    for epoch in range(scfg.epochs):
        run.run_epoch()
        print(f"search epoch {epoch + 1}/{scfg.epochs}  "
              f"train {run.state.train_loss[-1]:.4f}  "
              f"val {run.state.val_loss[-1]:.4f}")
    (out / "search.ckpt").write_bytes(run.checkpoint())
    geno = run.genotype()
    (out / "genotype.json").write_text(geno.to_json_text())
    print(f"genotype: {geno.to_json_text()}")

    tcfg = TrainConfig(layers=args.layers, epochs=args.train_epochs,
                       batch_size=args.batch, init_channels=args.channels,
                       seed=args.seed)
    net = FinalNetwork(geno, tcfg, leads=ds.leads)
    train_final(net, ds, log=print)
    (out / "model.hdmd").write_bytes(save_model(net))

    test_ids = ds.indices_for(SPLIT_TEST)
    cm = ConfusionMatrix()
    cm.update(ds.labels[test_ids], predict(net, ds.windows[test_ids]))
    report = report_from_matrix(cm.counts)
    text = render_report(report)
    (out / "report.txt").write_text(text + "\n")
    (out / "report.json").write_text(report_to_json_text(report))
    print(text)
    print(f"done in {time.perf_counter() - t0:.0f}s; artifacts in {out}/")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
