"""Per-hypothesis rescoring features.

Base quantities are computed for every hypothesis of a K-best list and then
expanded by list-level transformations:

1. ``is_min``: indicator that the value is the list minimum;
2. ``diff_min`` / ``diff_max``: min(0, f - f*) and max(0, f - f*) against the
   ASR top-1 (element 0);
3. ``eq`` / ``lt`` / ``gt``: comparison with the top-1 value;
4. ``z_min`` / ``z_max``: the list z-score clipped below / above zero;
5. ``max_lt`` / ``max_gt``: whether the list maximum is below / above a
   fixed threshold.

Continuous outputs (2 and 4) are also multiplied pairwise into composite
features.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..align import ConfusionModel, channel_logprob
from ..lexicon import UNK_PHONE, Lexicon, pronounce
from ..ngram import NGramLM, em_interpolation_weights, interpolated_logprob
from ..records import ASR, PTT, Hypothesis

COMPONENT_THRESHOLD = math.log10(1e-7)
EQ_TOL = 1e-9
ZERO_STD = 1e-12

GROUPS = ("phonetic", "acoustic", "interp-lm", "component-lm", "other")

Features = Dict[str, float]

# acoustic_cost(hypothesis, observation) -> (cost, phone length)
AcousticCost = Callable[[Hypothesis, Sequence[str]], Tuple[float, int]]


class ChannelAcousticCost:
    """Stand-in for forced alignment: the channel cost of the observation."""

    def __init__(self, cm: ConfusionModel):
        self.cm = cm

    def __call__(self, hyp: Hypothesis, obs: Sequence[str]) -> Tuple[float, int]:
        phones = hyp.phones or ()
        return -channel_logprob(self.cm, obs, phones), len(phones)


@dataclass
class FeatureContext:
    """Everything feature extraction needs besides the hypotheses."""

    lexicon: Lexicon
    cm: ConfusionModel
    components: List[NGramLM]
    acoustic: Optional[AcousticCost] = None
    threshold: float = COMPONENT_THRESHOLD
    em_iters: int = 20
    composites: Optional[List[Tuple[str, str]]] = None  # None: all pairs

    def __post_init__(self):
        if self.acoustic is None:
            self.acoustic = ChannelAcousticCost(self.cm)


def feature_group(name: str) -> str:
    """Group a schema feature belongs to; composites take their first factor's group."""
    base = name.split("*", 1)[0].split(".", 1)[0]
    if base in ("phon", "phone_len"):
        return "phonetic"
    if base == "ac":
        return "acoustic"
    if base == "interp":
        return "interp-lm"
    if base.startswith("lm"):
        return "component-lm"
    return "other"


def feature_groups(name: str) -> set:
    """All groups a feature touches (both factors for a composite)."""
    return {feature_group(part) for part in name.split("*")}


def attach_phones(hyps: Sequence[Hypothesis], obs: Sequence[str], ctx: FeatureContext) -> List[Hypothesis]:
    """Fill in missing phone sequences; OOV words become a single unknown phone."""
    out = []
    for h in hyps:
        if h.phones is None:
            phones = pronounce(ctx.lexicon, h.words, "min-channel-cost", ctx.cm, obs, unk=UNK_PHONE)
            h = Hypothesis(h.words, h.source, tuple(phones), dict(h.scores))
        out.append(h)
    return out


def base_quantities(hyps: Sequence[Hypothesis], obs: Sequence[str], ctx: FeatureContext) -> List[Features]:
    hyps = attach_phones(hyps, obs, ctx)
    top = hyps[0].phones
    words = [h.words for h in hyps]
    lam = em_interpolation_weights(ctx.components, words, iters=ctx.em_iters)
    rows = []
    for h in hyps:
        cost, plen = ctx.acoustic(h, obs)
        row = {
            "phon": -channel_logprob(ctx.cm, top, h.phones),
            "phone_len": float(plen),
            "ac": float(cost),
            "interp": interpolated_logprob(ctx.components, lam, h.words),
        }
        for k, lm in enumerate(ctx.components):
            row[f"lm{k}"] = lm.sequence_logprob(h.words)
        row["src_asr"] = 1.0 if h.source == ASR else 0.0
        row["src_ptt"] = 1.0 if h.source == PTT else 0.0
        rows.append(row)
    return rows


def zscores(values: Sequence[float]) -> np.ndarray:
    """Population z-scores over the list; all zeros when the values are constant."""
    v = np.asarray(values, dtype=float)
    sd = float(v.std())
    if sd < ZERO_STD * max(1.0, float(np.abs(v).max(initial=0.0))):
        return np.zeros_like(v)
    return (v - v.mean()) / sd


def t_is_min(v: np.ndarray) -> Dict[str, np.ndarray]:
    return {"is_min": (v <= v.min() + EQ_TOL).astype(float)}


def t_diff(v: np.ndarray) -> Dict[str, np.ndarray]:
    d = v - v[0]
    return {"diff_min": np.minimum(0.0, d), "diff_max": np.maximum(0.0, d)}


def t_compare(v: np.ndarray) -> Dict[str, np.ndarray]:
    d = v - v[0]
    return {
        "eq": (np.abs(d) <= EQ_TOL).astype(float),
        "lt": (d < -EQ_TOL).astype(float),
        "gt": (d > EQ_TOL).astype(float),
    }


def t_zscore(v: np.ndarray) -> Dict[str, np.ndarray]:
    z = zscores(v)
    return {"z_min": np.minimum(0.0, z), "z_max": np.maximum(0.0, z)}


def t_threshold(v: np.ndarray, t: float) -> Dict[str, np.ndarray]:
    top = v.max()
    ones = np.ones_like(v)
    return {"max_lt": ones * float(top < t), "max_gt": ones * float(top > t)}


CONTINUOUS = ("diff_min", "diff_max", "z_min", "z_max")


def transform(base: Sequence[Features], threshold: float = COMPONENT_THRESHOLD,
              composites: Optional[Sequence[Tuple[str, str]]] = None) -> List[Features]:
    """Apply the per-feature transformation variants to a list of base rows."""
    if not base:
        return []
    cols = {name: np.array([row[name] for row in base], dtype=float) for name in base[0]}
    out: Dict[str, np.ndarray] = {}

    def put(prefix, parts):
        for suffix, arr in parts.items():
            out[f"{prefix}.{suffix}"] = arr

    put("phon", t_is_min(cols["phon"]))
    put("phone_len", t_diff(cols["phone_len"]))
    for name in ("ac", "interp"):
        put(name, t_diff(cols[name]))
        put(name, t_compare(cols[name]))
        put(name, t_zscore(cols[name]))
    lm_names = sorted((n for n in cols if n.startswith("lm")), key=lambda n: int(n[2:]))
    for name in lm_names:
        put(name, t_zscore(cols[name]))
        put(name, t_threshold(cols[name], threshold))
    out["src.asr"] = cols["src_asr"]
    out["src.ptt"] = cols["src_ptt"]

    continuous = [n for n in out if n.rsplit(".", 1)[1] in CONTINUOUS]
    pairs = itertools.combinations(continuous, 2) if composites is None else composites
    for a, b in pairs:
        out[f"{a}*{b}"] = out[a] * out[b]

    names = list(out)
    return [{n: float(out[n][i]) for n in names} for i in range(len(base))]


def extract_features(hyps: Sequence[Hypothesis], obs: Sequence[str], ctx: FeatureContext) -> List[Features]:
    """Raw (unstandardized) transformed features, one dict per hypothesis."""
    if not hyps:
        raise ValueError("empty hypothesis list")
    rows = transform(base_quantities(hyps, obs, ctx), ctx.threshold, ctx.composites)
    for row in rows:
        for name, val in row.items():
            if not math.isfinite(val):
                raise ValueError(f"non-finite feature {name}={val}")
    return rows
