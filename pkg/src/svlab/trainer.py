"""Joint fine-tuning loop, evaluation and ablation sweeps.

Encoder and pooling back-end are optimized together: classification loss
(with angular margin) plus the snapshot pull-back term, per-group Adam
with layer-wise rates, global-norm gradient clipping and per-epoch rate
decay. An optional final phase raises the margin and segment length.
Everything is deterministic for a fixed config and seed in single-threaded
mode.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from array import array
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import backends, io
from . import tensor as T
from .config import config_hash
from .encoder import EncoderParams, PretrainedSnapshot, encode, layer_drift, pretrain_warmup
from .errors import ConfigError, DivergenceError, NumericError
from .metrics import cosine_score, metrics_report
from .objective import AamConfig, RegConfig, aam_loss, reg_loss, total_loss
from .optim import Adam, build_groups, clip_global_norm, epoch_tick
from .seeding import derive_rng
from .synth import load_corpus, read_trial_file
from .tensor import Tensor


@dataclass
class RunRecord:
    losses: list = field(default_factory=list)        # per-epoch mean loss
    drift: list = field(default_factory=list)         # rows: epoch 0 .. end, length L each
    metrics: dict | None = None
    elapsed_sec: float = 0.0
    config_hash: str = ""
    status: str = "ok"

    def to_dict(self):
        # elapsed_sec is deliberately excluded: record files must be
        # byte-identical across reruns of the same config+seed.
        return {
            "losses": self.losses,
            "drift": self.drift,
            "metrics": self.metrics,
            "config_hash": self.config_hash,
            "status": self.status,
        }


@dataclass
class TrainedSystem:
    enc_params: EncoderParams
    snapshot: PretrainedSnapshot
    backend: object
    class_weights: Tensor
    speakers: list
    exp_cfg: object


def _crop(frames, seg_len, rng):
    n_frames, feat = frames.shape
    if n_frames <= seg_len:
        return frames
    off = rng.randrange(n_frames - seg_len + 1)
    return Tensor((seg_len, feat), frames.data[off * feat : (off + seg_len) * feat])


def build_system(exp_cfg, corpus):
    """Initialize encoder (with warm-up snapshot), back-end and classifier."""
    tc = exp_cfg.train
    enc = EncoderParams(exp_cfg.encoder)
    snapshot, _ = pretrain_warmup(enc, corpus, tc.warmup_steps, seed=tc.seed)
    speakers = sorted({u.speaker_id for u in corpus})
    backend = backends.make_backend(
        tc.backend,
        exp_cfg.encoder.n_layers,
        exp_cfg.encoder.model_dim,
        head_dim=tc.head_dim,
        n_heads=tc.n_heads,
        emb_dim=tc.emb_dim,
        seed=tc.seed,
        constraint=tc.constraint,
    )
    rng = derive_rng(tc.seed, "classifier-init")
    lim = 1.0 / math.sqrt(tc.emb_dim)
    class_w = Tensor(
        (tc.emb_dim, len(speakers)),
        [rng.uniform(-lim, lim) for _ in range(tc.emb_dim * len(speakers))],
        requires_grad=True,
    )
    return TrainedSystem(enc, snapshot, backend, class_w, speakers, exp_cfg)


def train(exp_cfg, corpus):
    """Run the full fine-tuning recipe; returns (system, RunRecord)."""
    t0 = time.perf_counter()
    tc = exp_cfg.train
    try:
        system = build_system(exp_cfg, corpus)
    except NumericError as exc:
        raise DivergenceError(f"non-finite values during warm-up: {exc}") from exc
    label_of = {spk: i for i, spk in enumerate(system.speakers)}
    llrd = tc.llrd()
    backend_named = system.backend.named_params() + [("class_weights", system.class_weights)]
    groups = build_groups(system.enc_params, backend_named, llrd)
    opt = Adam(groups)
    reg_cfg = RegConfig(tc.lambda_reg, system.snapshot)
    record = RunRecord(config_hash=config_hash(exp_cfg))
    record.drift.append(layer_drift(system.enc_params, system.snapshot))

    total_epochs = tc.epochs + (tc.lmft_epochs if tc.lmft_enabled else 0)
    step = 0
    for epoch in range(total_epochs):
        lmft = tc.lmft_enabled and epoch >= tc.epochs
        margin = tc.lmft_margin if lmft else tc.margin
        seg_len = tc.lmft_segment_frames if lmft else tc.segment_frames
        aam_cfg = AamConfig(margin, tc.scale, len(system.speakers))
        order = list(range(len(corpus)))
        derive_rng(tc.seed, "shuffle", epoch).shuffle(order)
        crop_rng = derive_rng(tc.seed, "crop", epoch)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(order), tc.batch_size):
            idxs = order[start : start + tc.batch_size]
            try:
                embs, labels = [], []
                for i in idxs:
                    utt = corpus[i]
                    stack = encode(system.enc_params, _crop(utt.frames, seg_len, crop_rng))
                    embs.append(backends.forward(system.backend, stack))
                    labels.append(label_of[utt.speaker_id])
                spk = aam_loss(aam_cfg, T.concat_rows(embs), system.class_weights, labels)
                if tc.lambda_reg > 0 and not llrd.freeze_encoder:
                    loss = total_loss(spk, reg_loss(reg_cfg, system.enc_params), tc.lambda_reg)
                else:
                    loss = spk
                val = loss.item()
            except NumericError as exc:
                # overflow inside the forward pass is divergence, same as a
                # non-finite loss value
                raise DivergenceError(
                    f"non-finite values at epoch {epoch}, update step {step}: {exc}"
                ) from exc
            if not math.isfinite(val):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, update step {step}"
                )
            loss.backward()
            clip_global_norm(groups, 5.0)
            opt.step()
            step += 1
            epoch_loss += val
            n_batches += 1
        epoch_tick(groups, llrd)
        record.losses.append(epoch_loss / max(n_batches, 1))
        record.drift.append(layer_drift(system.enc_params, system.snapshot))
    record.elapsed_sec = time.perf_counter() - t0
    return system, record


# -- embedding extraction and evaluation ----------------------------------------


def embed(system, frames):
    with T.no_grad():
        return backends.forward(system.backend, encode(system.enc_params, frames))


def evaluate_trials(system, trials, load_frames, threads=1):
    """Score (enroll, test, label) trials; each utterance is embedded once.

    ``load_frames`` maps a trial path to a frames tensor. Returns
    (report dict, scored trials).
    """
    paths = []
    seen = set()
    for a, b, _ in trials:
        for p in (a, b):
            if p not in seen:
                seen.add(p)
                paths.append(p)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            embedded = list(pool.map(lambda p: embed(system, load_frames(p)), paths))
    else:
        embedded = [embed(system, load_frames(p)) for p in paths]
    cache = dict(zip(paths, embedded))
    scores = [(cosine_score(cache[a], cache[b]), is_target) for a, b, is_target in trials]
    report = metrics_report(scores)
    return report, scores


def evaluate_files(system, trial_path, data_dir, threads=1):
    from .tensor import load_tensor

    trials = read_trial_file(trial_path)

    def load_frames(rel):
        full = os.path.join(data_dir, rel)
        if not os.path.exists(full):
            raise IOError(f"utterance file not found: {full}")
        return load_tensor(full)

    return evaluate_trials(system, trials, load_frames, threads=threads)


# -- checkpoints ----------------------------------------------------------------


def save_checkpoint(path, system, opt=None):
    manifest = {
        "format": "svlab-system",
        "config": system.exp_cfg.to_dict(),
        "speakers": list(system.speakers),
    }
    named = []
    for name, t in system.enc_params.named_all():
        named.append((f"encoder.{name}", t))
    for name, data in system.snapshot.items():
        named.append((f"snapshot.{name}", Tensor(_shape_of(system.enc_params, name), array("d", data))))
    for name, t in system.backend.named_params():
        named.append((f"backend.{name}", t))
    named.append(("classifier.weights", system.class_weights))
    if opt is not None:
        manifest["opt_iteration"] = opt.t
        named.extend(opt.state_tensors())
    io.write_checkpoint(path, manifest, named)


def _shape_of(enc_params, name):
    for n, t in enc_params.named_all():
        if n == name:
            return t.shape
    raise ConfigError(f"unknown encoder tensor {name!r} in snapshot")


def load_checkpoint(path):
    from .config import from_dict

    manifest, tensors = io.read_checkpoint(path)
    exp_cfg = from_dict(manifest["config"])
    tc = exp_cfg.train
    enc = EncoderParams(exp_cfg.encoder)
    for name, t in enc.named_all():
        t.data[:] = tensors[f"encoder.{name}"].data
    snap_src = EncoderParams(exp_cfg.encoder)
    for name, t in snap_src.named_all():
        t.data[:] = tensors[f"snapshot.{name}"].data
    snapshot = PretrainedSnapshot(snap_src)
    backend = backends.make_backend(
        tc.backend,
        exp_cfg.encoder.n_layers,
        exp_cfg.encoder.model_dim,
        head_dim=tc.head_dim,
        n_heads=tc.n_heads,
        emb_dim=tc.emb_dim,
        seed=tc.seed,
        constraint=tc.constraint,
    )
    for name, t in backend.named_params():
        t.data[:] = tensors[f"backend.{name}"].data
    class_w = tensors["classifier.weights"].copy(requires_grad=True)
    return TrainedSystem(enc, snapshot, backend, class_w, list(manifest["speakers"]), exp_cfg)


# -- record export ---------------------------------------------------------------


def write_run_record(record, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "record.json"), "w") as fh:
        json.dump(record.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    # wall time lives in a sidecar so record.json stays deterministic
    with open(os.path.join(out_dir, "timing.txt"), "w") as fh:
        fh.write(f"elapsed_sec {record.elapsed_sec:.3f}\n")
    with open(os.path.join(out_dir, "drift.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "layer", "drift"])
        for epoch, row in enumerate(record.drift):
            for layer, d in enumerate(row, start=1):
                w.writerow([epoch, layer, repr(d)])


# -- sweeps ----------------------------------------------------------------------

SWEEP_AXES = ("xi", "heads", "lambda", "constraint", "backend")

_AXIS_FIELD = {
    "xi": ("train", "xi", float),
    "heads": ("train", "n_heads", int),
    "lambda": ("train", "lambda_reg", float),
    "constraint": ("train", "constraint", str),
    "backend": ("train", "backend", str),
}


def sweep(exp_cfg, axis, values, corpus, trials, load_frames):
    """Train/evaluate one run per axis value; failures become marked rows."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}, expected one of {SWEEP_AXES}")
    section, fname, conv = _AXIS_FIELD[axis]
    rows = []
    for raw in values:
        value = conv(raw)
        cfg = exp_cfg.replace(section, **{fname: value})
        row = {"axis": axis, "value": value, "eer": "", "dcf1": "", "dcf5": "",
               "drift_total": "", "status": "ok"}
        try:
            system, record = train(cfg, corpus)
            report, _ = evaluate_trials(system, trials, load_frames)
            row["eer"] = report["eer"]
            row["dcf1"] = report["dcf1"]
            row["dcf5"] = report["dcf5"]
            row["drift_total"] = sum(record.drift[-1])
        except DivergenceError:
            row["status"] = "NAN"
        rows.append(row)
    rows.sort(key=lambda r: r["value"] if isinstance(r["value"], (int, float)) else str(r["value"]))
    return rows


def write_sweep_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["value", "eer", "dcf1", "dcf5", "drift_total", "status"])
        for r in rows:
            w.writerow([r["value"], r["eer"], r["dcf1"], r["dcf5"], r["drift_total"], r["status"]])


def load_corpus_dir(data_dir, split):
    return load_corpus(os.path.join(data_dir, split, "manifest.txt"))
