"""Trial scoring metrics: EER and normalized minimum detection cost.

Operating points are counted exactly (integer false-accept / false-reject
counts at every threshold between consecutive distinct scores, plus the
accept-all and reject-all policies). EER is read off the convex hull of
the ROC with linear interpolation at the miss/false-alarm crossing; the
interpolation is done in exact rational arithmetic so results are
reproducible bit-for-bit. minDCF scans the same operating points.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

from . import kernels as K
from .errors import ConfigError, ContractError, MetricUndefinedError


@dataclass
class DcfConfig:
    p_tar: float = 0.01
    c_fa: float = 1.0
    c_fr: float = 1.0

    def __post_init__(self):
        if not (0 < self.p_tar < 1):
            raise ConfigError(f"p_tar must be in (0, 1), got {self.p_tar}")
        if self.c_fa <= 0 or self.c_fr <= 0:
            raise ConfigError("costs must be positive")


def cosine_score(a, b):
    """Dot product of two unit-norm embeddings."""
    va, vb = a.data, b.data
    if a.shape != b.shape:
        raise ContractError(f"embedding shapes differ: {a.shape} vs {b.shape}")
    for name, v in (("first", va), ("second", vb)):
        nrm = math.sqrt(K.dot(v, v))
        if abs(nrm - 1.0) > 1e-6:
            raise ContractError(f"{name} embedding is not unit-norm (|x| = {nrm})")
    return K.dot(va, vb)


def _validate(scores):
    n_tar = sum(1 for _, t in scores if t)
    n_non = len(scores) - n_tar
    if n_tar == 0 or n_non == 0:
        raise MetricUndefinedError(
            f"need at least one target and one non-target trial "
            f"(got {n_tar} targets, {n_non} non-targets)"
        )
    return n_tar, n_non


def operating_points(scores):
    """Integer (false_accepts, false_rejects) at every threshold.

    Returned from the accept-all policy to the reject-all policy, i.e. in
    order of rising threshold.
    """
    n_tar, n_non = _validate(scores)
    pts = [(n_non, 0)]
    u, v = n_non, 0
    ordered = sorted(scores)
    i = 0
    while i < len(ordered):
        val = ordered[i][0]
        while i < len(ordered) and ordered[i][0] == val:
            if ordered[i][1]:
                v += 1
            else:
                u -= 1
            i += 1
        pts.append((u, v))
    return pts, n_tar, n_non


def _cross(p1, p2, p3):
    # Orientation in ROC (x = fa/Nn, y = 1 - fr/Nt) space, computed on the
    # integer counts so collinearity is decided exactly.
    (u1, v1), (u2, v2), (u3, v3) = p1, p2, p3
    return (u2 - u1) * (v1 - v3) - (u3 - u1) * (v1 - v2)


def _roc_hull(pts):
    """Vertices of the upper convex hull of the ROC, as integer counts."""
    # ascending x; for equal x ascending y (v descending)
    ordered = sorted(set(pts), key=lambda p: (p[0], -p[1]))
    hull = []
    for p in ordered:
        while len(hull) >= 2 and _cross(hull[-2], hull[-1], p) >= 0:
            hull.pop()
        hull.append(p)
    return hull


def eer(scores):
    """Equal error rate and the score threshold region it corresponds to.

    Returns (rate, threshold). The rate is taken where the miss and
    false-alarm curves of the ROC convex hull cross, linearly interpolated
    between adjacent operating points.
    """
    pts, n_tar, n_non = operating_points(scores)
    hull = _roc_hull(pts)
    ds = [Fraction(v, n_tar) - Fraction(u, n_non) for u, v in hull]
    rate = None
    for i in range(len(hull)):
        if ds[i] == 0:
            rate = Fraction(hull[i][0], n_non)
            break
        if i + 1 < len(hull) and ds[i] > 0 > ds[i + 1]:
            t = ds[i] / (ds[i] - ds[i + 1])
            fa1 = Fraction(hull[i][0], n_non)
            fa2 = Fraction(hull[i + 1][0], n_non)
            rate = fa1 + t * (fa2 - fa1)
            break
    if rate is None:  # d is strictly decreasing along the hull; cannot happen
        raise MetricUndefinedError("no miss/false-alarm crossing found")
    return float(rate), _eer_threshold(scores, rate)


def _eer_threshold(scores, rate):
    # Lowest threshold whose false-accept fraction does not exceed the EER;
    # reported for diagnostics only.
    non = sorted(s for s, t in scores if not t)
    k = math.ceil(len(non) * (1 - float(rate)))
    if k <= 0:
        return non[0]
    if k >= len(non):
        return non[-1]
    return non[k]


def min_dcf(scores, cfg):
    """Minimum normalized detection cost over all thresholds."""
    pts, n_tar, n_non = operating_points(scores)
    best = None
    for u, v in pts:
        cost = cfg.c_fr * cfg.p_tar * (v / n_tar) + cfg.c_fa * (1 - cfg.p_tar) * (u / n_non)
        if best is None or cost < best:
            best = cost
    return best / min(cfg.c_fr * cfg.p_tar, cfg.c_fa * (1 - cfg.p_tar))


# -- reports and score files ---------------------------------------------------


def metrics_report(scores):
    """EER plus minDCF at the two standard priors, as a plain dict."""
    rate, _thr = eer(scores)
    n_tar = sum(1 for _, t in scores if t)
    return {
        "eer": rate,
        "dcf1": min_dcf(scores, DcfConfig(p_tar=0.01)),
        "dcf5": min_dcf(scores, DcfConfig(p_tar=0.05)),
        "n_target": n_tar,
        "n_nontarget": len(scores) - n_tar,
    }


def write_report(report, path):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_scores(scores, path):
    """One line per trial: 'label score' with label in {1,0}."""
    with open(path, "w") as fh:
        for s, is_target in scores:
            fh.write(f"{1 if is_target else 0} {s!r}\n")


def read_scores(path):
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2 or parts[0] not in ("0", "1"):
                raise IOError(f"{path}:{lineno}: malformed score line {line!r}")
            out.append((float(parts[1]), parts[0] == "1"))
    return out
