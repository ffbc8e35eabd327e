"""ECG ingestion: CSV records -> denoised, segmented, labeled beat datasets.

The flow per record: read signal + annotation CSVs, wavelet-denoise each lead
over the whole record, cut an R-peak-centered window around every annotated
beat, map the annotation symbol onto the five AAMI classes, and z-score each
lead of each window. Beats from all records are ordered by
(record_id, r_peak_index) and split 80/20 into train/test, with the train side
re-split 80/20 into search_train/search_val by position.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .binio import Reader, Writer
from .errors import ConfigError, DatasetFileError, IngestionError, InputError
from .wavelet import denoise

Array = np.ndarray

AAMI_CLASSES: tuple[str, ...] = ("N", "S", "V", "F", "Q")
CLASS_INDEX = {name: i for i, name in enumerate(AAMI_CLASSES)}

# MIT-BIH style annotation symbols -> AAMI class. Paced beats ('/') and
# fusion-of-paced ('f') land in Q alongside unclassifiable beats.
SYMBOL_CLASS: dict[str, str] = {
    "N": "N", "L": "N", "R": "N", "e": "N", "j": "N",
    "A": "S", "a": "S", "J": "S", "S": "S",
    "V": "V", "E": "V",
    "F": "F",
    "P": "Q", "Q": "Q", "f": "Q", "/": "Q",
}

SPLIT_SEARCH_TRAIN = 0
SPLIT_SEARCH_VAL = 1
SPLIT_TEST = 2
SPLIT_NAMES = {SPLIT_SEARCH_TRAIN: "search_train", SPLIT_SEARCH_VAL: "search_val",
               SPLIT_TEST: "test"}

_DATASET_MAGIC = b"HDDS"
_DATASET_VERSION = 1


@dataclass(frozen=True)
class DbProfile:
    """Per-database sampling rate and R-centered window extents (inclusive)."""

    fs: int
    pre: int
    post: int

    @property
    def window_len(self) -> int:
        return self.pre + self.post + 1


DB_PROFILES: dict[str, DbProfile] = {
    "mitbih": DbProfile(fs=360, pre=99, post=200),   # window 300
    "incart": DbProfile(fs=257, pre=99, post=150),   # window 250
    "qt": DbProfile(fs=250, pre=99, post=120),       # window 220
}


@dataclass
class EcgRecord:
    record_id: str
    fs: float
    lead_names: tuple[str, ...]
    signal: Array          # [leads, samples] float64
    ann_samples: Array     # [beats] int64, strictly increasing
    ann_symbols: list[str]


@dataclass
class Heartbeat:
    window: Array          # [leads, window_len] float64
    label: int             # index into AAMI_CLASSES
    record_id: str
    r_peak: int


@dataclass
class SegmentationResult:
    beats: list[Heartbeat]
    dropped: int = 0       # window ran past a record boundary
    skipped: int = 0       # annotation symbol outside the class map


def load_record_csv(signal_path: str | Path, annotation_path: str | Path, *,
                    fs: float, leads: tuple[str, ...] | None = None) -> EcgRecord:
    """Read one record's signal and annotation CSVs.

    Signal header: sample_index,<lead>[,<lead>...]. Annotation header:
    sample_index,symbol. `leads` selects and orders a subset by name.
    """
    signal_path = Path(signal_path)
    annotation_path = Path(annotation_path)
    try:
        sig = pd.read_csv(signal_path)
    except (OSError, ValueError, pd.errors.ParserError) as e:
        raise IngestionError(f"cannot read signal CSV {signal_path}: {e}") from None
    if sig.columns.size < 2 or sig.columns[0] != "sample_index":
        raise IngestionError(
            f"{signal_path}: header must be sample_index,<lead>[,...], got {list(sig.columns)}")
    available = tuple(sig.columns[1:])
    if leads is None:
        selected = available
    else:
        missing = [name for name in leads if name not in available]
        if missing:
            raise IngestionError(
                f"{signal_path}: leads {missing} not in record (has {list(available)})")
        selected = tuple(leads)
    try:
        data = sig[list(selected)].to_numpy(dtype=np.float64).T
    except ValueError as e:
        raise IngestionError(f"{signal_path}: non-numeric samples: {e}") from None
    if not np.isfinite(data).all():
        raise IngestionError(f"{signal_path}: signal contains non-finite samples")

    try:
        ann = pd.read_csv(annotation_path, dtype={"symbol": str},
                          keep_default_na=False)
    except (OSError, ValueError, pd.errors.ParserError) as e:
        raise IngestionError(f"cannot read annotation CSV {annotation_path}: {e}") from None
    if list(ann.columns) != ["sample_index", "symbol"]:
        raise IngestionError(
            f"{annotation_path}: header must be sample_index,symbol, got {list(ann.columns)}")
    try:
        samples = ann["sample_index"].to_numpy(dtype=np.int64)
    except (ValueError, OverflowError) as e:
        raise IngestionError(f"{annotation_path}: bad sample_index column: {e}") from None
    if samples.size and (np.diff(samples) <= 0).any():
        raise IngestionError(f"{annotation_path}: sample_index must be strictly increasing")
    if samples.size and (samples[0] < 0 or samples[-1] >= data.shape[1]):
        raise IngestionError(
            f"{annotation_path}: annotation index out of record range 0..{data.shape[1] - 1}")
    symbols = [str(s) for s in ann["symbol"].tolist()]
    return EcgRecord(record_id=signal_path.stem, fs=fs, lead_names=selected,
                     signal=data, ann_samples=samples, ann_symbols=symbols)


def denoise_record(rec: EcgRecord) -> EcgRecord:
    """Wavelet-denoise every lead over the full record, pre-segmentation."""
    cleaned = np.stack([denoise(lead, rec.fs) for lead in rec.signal])
    return EcgRecord(record_id=rec.record_id, fs=rec.fs, lead_names=rec.lead_names,
                     signal=cleaned, ann_samples=rec.ann_samples,
                     ann_symbols=rec.ann_symbols)


def normalize_window(window: Array) -> Array:
    """Per-lead z-score (population std). A constant lead becomes all zeros."""
    w = np.asarray(window, dtype=np.float64)
    if w.ndim != 2:
        raise InputError(f"window must be [leads, samples], got shape {w.shape}")
    mean = w.mean(axis=1, keepdims=True)
    std = w.std(axis=1, keepdims=True)
    out = np.zeros_like(w)
    alive = std[:, 0] > 0.0
    out[alive] = (w[alive] - mean[alive]) / std[alive]
    return out


def segment_heartbeats(rec: EcgRecord, pre: int, post: int) -> SegmentationResult:
    """Cut [r - pre, r + post] (inclusive) windows around annotated beats.

    Beats whose window crosses a record boundary are dropped; symbols outside
    the class map are skipped. Both are counted, neither is an error.
    """
    if pre < 0 or post < 0:
        raise InputError(f"pre/post must be >= 0, got {pre}, {post}")
    result = SegmentationResult(beats=[])
    n = rec.signal.shape[1]
    for r, symbol in zip(rec.ann_samples, rec.ann_symbols):
        cls = SYMBOL_CLASS.get(symbol)
        if cls is None:
            result.skipped += 1
            continue
        lo, hi = int(r) - pre, int(r) + post
        if lo < 0 or hi >= n:
            result.dropped += 1
            continue
        window = normalize_window(rec.signal[:, lo:hi + 1])
        result.beats.append(Heartbeat(window=window, label=CLASS_INDEX[cls],
                                      record_id=rec.record_id, r_peak=int(r)))
    return result


@dataclass(eq=False)
class HeartbeatDataset:
    """Flat beat store: windows plus per-beat label, split tag, and source."""

    windows: Array          # [n, leads, window_len] float32
    labels: Array           # [n] uint8
    splits: Array           # [n] uint8
    record_ids: list[str]
    r_peaks: Array          # [n] uint64

    def __post_init__(self):
        n = len(self.windows)
        if not (len(self.labels) == len(self.splits) == len(self.record_ids)
                == len(self.r_peaks) == n):
            raise InputError("dataset columns have mismatched lengths")

    @property
    def leads(self) -> int:
        return self.windows.shape[1]

    @property
    def window_len(self) -> int:
        return self.windows.shape[2]

    def __len__(self) -> int:
        return len(self.windows)

    def indices_for(self, split: int) -> Array:
        return np.flatnonzero(self.splits == split)

    def class_counts(self, split: int | None = None) -> Array:
        labels = self.labels if split is None else self.labels[self.splits == split]
        return np.bincount(labels, minlength=len(AAMI_CLASSES))

    def to_bytes(self) -> bytes:
        w = Writer()
        w.magic(_DATASET_MAGIC, _DATASET_VERSION)
        w.u8(self.leads)
        w.u32(self.window_len)
        w.u64(len(self))
        for i in range(len(self)):
            w.u8(int(self.labels[i]))
            w.u8(int(self.splits[i]))
            w.string(self.record_ids[i], width=16)
            w.u64(int(self.r_peaks[i]))
            w.raw(np.ascontiguousarray(self.windows[i], dtype="<f4").tobytes())
        return w.getvalue()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "HeartbeatDataset":
        r = Reader(blob, DatasetFileError, "dataset file")
        r.magic(_DATASET_MAGIC, _DATASET_VERSION)
        leads = r.u8()
        window_len = r.u32()
        count = r.u64()
        if leads < 1 or window_len < 1:
            raise DatasetFileError(f"bad dataset geometry: leads={leads}, window={window_len}")
        windows = np.empty((count, leads, window_len), dtype=np.float32)
        labels = np.empty(count, dtype=np.uint8)
        splits = np.empty(count, dtype=np.uint8)
        r_peaks = np.empty(count, dtype=np.uint64)
        record_ids: list[str] = []
        frame = leads * window_len * 4
        for i in range(count):
            labels[i] = r.u8()
            splits[i] = r.u8()
            record_ids.append(r.string(width=16))
            r_peaks[i] = r.u64()
            raw = r._take(frame)
            windows[i] = np.frombuffer(raw, dtype="<f4").reshape(leads, window_len)
        r.expect_eof()
        if labels.size and labels.max() >= len(AAMI_CLASSES):
            raise DatasetFileError(f"label {labels.max()} out of range")
        if splits.size and splits.max() > SPLIT_TEST:
            raise DatasetFileError(f"split tag {splits.max()} out of range")
        return cls(windows=windows, labels=labels, splits=splits,
                   record_ids=record_ids, r_peaks=r_peaks)


def build_dataset(beats: list[Heartbeat], seed: int) -> HeartbeatDataset:
    """Order beats canonically, then assign splits with a seeded shuffle.

    80/20 train/test on the shuffled order (train size rounded down), then the
    train side re-split positionally: first 80% search_train, rest search_val.
    """
    if not beats:
        raise ConfigError("no beats to build a dataset from")
    order = sorted(range(len(beats)), key=lambda i: (beats[i].record_id, beats[i].r_peak))
    beats = [beats[i] for i in order]
    leads, window_len = beats[0].window.shape
    for b in beats:
        if b.window.shape != (leads, window_len):
            raise InputError(
                f"inconsistent window shapes: {b.window.shape} vs {(leads, window_len)}")
    n = len(beats)
    rng = np.random.Generator(np.random.PCG64(seed))
    perm = rng.permutation(n)
    n_train = int(0.8 * n)
    n_search_train = int(0.8 * n_train)
    splits = np.empty(n, dtype=np.uint8)
    splits[perm[:n_search_train]] = SPLIT_SEARCH_TRAIN
    splits[perm[n_search_train:n_train]] = SPLIT_SEARCH_VAL
    splits[perm[n_train:]] = SPLIT_TEST
    windows = np.stack([b.window for b in beats]).astype(np.float32)
    return HeartbeatDataset(
        windows=windows,
        labels=np.array([b.label for b in beats], dtype=np.uint8),
        splits=splits,
        record_ids=[b.record_id for b in beats],
        r_peaks=np.array([b.r_peak for b in beats], dtype=np.uint64),
    )


def preprocess_worker_count() -> int:
    """Pool size for per-record preprocessing; CARDIONAS_NUM_THREADS overrides.

    The pool only parallelizes independent records and results are re-sorted,
    so the setting can never change output bytes.
    """
    raw = os.environ.get("CARDIONAS_NUM_THREADS", "").strip()
    if raw:
        try:
            v = int(raw)
        except ValueError:
            raise ConfigError(f"CARDIONAS_NUM_THREADS must be an integer, got {raw!r}") from None
        if v < 1:
            raise ConfigError(f"CARDIONAS_NUM_THREADS must be >= 1, got {v}")
        return v
    return os.cpu_count() or 1


@dataclass
class PreprocessReport:
    beats: int
    dropped: int
    skipped: int
    records: int
    per_class: dict[str, int] = field(default_factory=dict)


def preprocess_records(pairs: list[tuple[Path, Path]], profile: DbProfile, *,
                       leads: tuple[str, ...] | None, seed: int,
                       workers: int | None = None) -> tuple[HeartbeatDataset, PreprocessReport]:
    """Full pipeline over (signal, annotation) path pairs -> split dataset."""
    if not pairs:
        raise ConfigError("no records to preprocess")

    def one(pair: tuple[Path, Path]) -> SegmentationResult:
        rec = load_record_csv(pair[0], pair[1], fs=profile.fs, leads=leads)
        rec = denoise_record(rec)
        return segment_heartbeats(rec, profile.pre, profile.post)

    workers = workers if workers is not None else preprocess_worker_count()
    if workers > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, pairs))
    else:
        results = [one(p) for p in pairs]
    beats: list[Heartbeat] = []
    dropped = skipped = 0
    for res in results:
        beats.extend(res.beats)
        dropped += res.dropped
        skipped += res.skipped
    dataset = build_dataset(beats, seed)
    counts = dataset.class_counts()
    report = PreprocessReport(
        beats=len(dataset), dropped=dropped, skipped=skipped, records=len(pairs),
        per_class={name: int(counts[i]) for i, name in enumerate(AAMI_CLASSES)})
    return dataset, report


def dataset_stats(ds: HeartbeatDataset) -> str:
    """Human-readable per-split class breakdown."""
    lines = [f"beats: {len(ds)}  leads: {ds.leads}  window: {ds.window_len}"]
    header = "split         " + "".join(f"{c:>8}" for c in AAMI_CLASSES) + "   total"
    lines.append(header)
    for split, name in SPLIT_NAMES.items():
        counts = ds.class_counts(split)
        lines.append(f"{name:<14}" + "".join(f"{int(c):>8}" for c in counts)
                     + f"{int(counts.sum()):>8}")
    counts = ds.class_counts()
    lines.append(f"{'all':<14}" + "".join(f"{int(c):>8}" for c in counts)
                 + f"{int(counts.sum()):>8}")
    return "\n".join(lines)
