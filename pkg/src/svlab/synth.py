"""Seeded synthetic utterances with separable speaker and phonetic factors.

Each frame is ``speaker_scale*u(spk) + phone_scale*v(phone_t) + noise_scale*eps``
with ``u``/``v`` fixed unit vectors drawn from the corpus seed, the phone
sequence following a first-order Markov chain (self-transition 0.7) and
i.i.d. standard normal noise. Everything is a pure function of the config,
so identical configs give bit-identical corpora.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

from .errors import CapacityError, ConfigError
from .seeding import derive_rng
from .tensor import Tensor, load_tensor, save_tensor

SELF_TRANSITION = 0.7


@dataclass(frozen=True)
class SynthConfig:
    n_speakers: int = 40
    n_phones: int = 16
    frame_dim: int = 24
    frames_per_utt: int = 60
    speaker_scale: float = 1.0
    phone_scale: float = 3.0
    noise_scale: float = 0.5
    seed: int = 12345

    def __post_init__(self):
        if self.n_speakers < 2:
            raise ConfigError(f"n_speakers must be >= 2, got {self.n_speakers}")
        if self.n_phones < 1:
            raise ConfigError(f"n_phones must be >= 1, got {self.n_phones}")
        if self.frames_per_utt < 1:
            raise ConfigError(f"frames_per_utt must be >= 1, got {self.frames_per_utt}")
        if self.frame_dim < 1:
            raise ConfigError(f"frame_dim must be >= 1, got {self.frame_dim}")
        for name in ("speaker_scale", "phone_scale", "noise_scale"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")


@dataclass
class Utterance:
    frames: Tensor          # T x F0
    speaker_id: int
    phone_seq: list = field(default_factory=list)  # ground truth, never fed to models
    name: str = ""


def _unit_vector(rng, dim):
    while True:
        v = [rng.gauss(0.0, 1.0) for _ in range(dim)]
        nrm = math.sqrt(sum(x * x for x in v))
        if nrm > 1e-12:
            return [x / nrm for x in v]


def latent_vectors(cfg):
    """Per-speaker and per-phone unit vectors, fixed by the corpus seed."""
    spk_rng = derive_rng(cfg.seed, "speakers")
    ph_rng = derive_rng(cfg.seed, "phones")
    speakers = [_unit_vector(spk_rng, cfg.frame_dim) for _ in range(cfg.n_speakers)]
    phones = [_unit_vector(ph_rng, cfg.frame_dim) for _ in range(cfg.n_phones)]
    return speakers, phones


def _phone_walk(rng, n_phones, length):
    seq = [rng.randrange(n_phones)]
    for _ in range(length - 1):
        cur = seq[-1]
        if n_phones == 1 or rng.random() < SELF_TRANSITION:
            seq.append(cur)
        else:
            nxt = rng.randrange(n_phones - 1)
            if nxt >= cur:
                nxt += 1
            seq.append(nxt)
    return seq


def make_corpus(cfg, n_utts_per_speaker, tag="train"):
    if n_utts_per_speaker < 1:
        raise ConfigError(f"n_utts_per_speaker must be >= 1, got {n_utts_per_speaker}")
    speakers, phones = latent_vectors(cfg)
    T, F = cfg.frames_per_utt, cfg.frame_dim
    corpus = []
    for spk in range(cfg.n_speakers):
        for u in range(n_utts_per_speaker):
            rng = derive_rng(cfg.seed, tag, spk, u)
            seq = _phone_walk(rng, cfg.n_phones, T)
            data = []
            su = speakers[spk]
            for t in range(T):
                pv = phones[seq[t]]
                for d in range(F):
                    x = cfg.speaker_scale * su[d] + cfg.phone_scale * pv[d]
                    if cfg.noise_scale > 0:
                        x += cfg.noise_scale * rng.gauss(0.0, 1.0)
                    data.append(x)
            corpus.append(
                Utterance(
                    frames=Tensor((T, F), data),
                    speaker_id=spk,
                    phone_seq=seq,
                    name=f"{tag}_s{spk:03d}_u{u:03d}",
                )
            )
    return corpus


def split_trials(corpus, n_target, n_nontarget, seed):
    """Sample labeled trial pairs without replacement.

    Returns (utt_a, utt_b, is_target) triples; no utterance is ever paired
    with itself. Raises CapacityError if the corpus cannot supply the
    requested counts.
    """
    if n_target < 0 or n_nontarget < 0:
        raise ConfigError("trial counts must be non-negative")
    same, cross = [], []
    for i in range(len(corpus)):
        for j in range(i + 1, len(corpus)):
            if corpus[i].speaker_id == corpus[j].speaker_id:
                same.append((i, j))
            else:
                cross.append((i, j))
    if n_target > len(same):
        raise CapacityError(
            f"requested {n_target} target trials but only {len(same)} same-speaker pairs exist"
        )
    if n_nontarget > len(cross):
        raise CapacityError(
            f"requested {n_nontarget} non-target trials but only {len(cross)} cross-speaker pairs exist"
        )
    rng = derive_rng(seed, "trials")
    picked_t = rng.sample(same, n_target)
    picked_n = rng.sample(cross, n_nontarget)
    trials = [(corpus[i], corpus[j], True) for i, j in picked_t]
    trials += [(corpus[i], corpus[j], False) for i, j in picked_n]
    rng.shuffle(trials)
    return trials


# -- on-disk form --------------------------------------------------------------


def export_corpus(corpus, outdir):
    """One tensor file per utterance plus a text manifest (path speaker_id)."""
    os.makedirs(outdir, exist_ok=True)
    lines = []
    for utt in corpus:
        fname = utt.name + ".ten"
        save_tensor(os.path.join(outdir, fname), utt.frames)
        lines.append(f"{fname} {utt.speaker_id}")
    with open(os.path.join(outdir, "manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_corpus(manifest_path):
    base = os.path.dirname(manifest_path)
    corpus = []
    with open(manifest_path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise IOError(f"{manifest_path}:{lineno}: expected 'path speaker_id', got {line!r}")
            path, spk = parts
            frames = load_tensor(os.path.join(base, path))
            corpus.append(Utterance(frames=frames, speaker_id=int(spk), name=os.path.splitext(path)[0]))
    return corpus


def write_trial_file(trials, path):
    """One line per trial: 'label enroll_path test_path' with label in {1,0}."""
    with open(path, "w") as fh:
        for a, b, is_target in trials:
            fh.write(f"{1 if is_target else 0} {a.name}.ten {b.name}.ten\n")


def read_trial_file(path):
    trials = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3 or parts[0] not in ("0", "1"):
                raise IOError(
                    f"{path}:{lineno}: malformed trial line {line!r} "
                    "(expected 'label enroll_path test_path')"
                )
            trials.append((parts[1], parts[2], parts[0] == "1"))
    return trials
