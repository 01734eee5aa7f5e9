"""Welch t-test, one-way ANOVA and Tukey HSD without a statistics library.

p-values come from the regularized incomplete beta function, evaluated with
a modified Lentz continued fraction.  Tukey critical values are looked up in
an embedded studentized-range table (alpha = 0.05).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from itertools import combinations

import numpy as np

_EPS = 1e-15
_TINY = 1e-300


def _betacf(a: float, b: float, x: float, max_iter: int = 500) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = _TINY if abs(d) < _TINY else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)``."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    return min(1.0, max(0.0, betainc(0.5 * df, 0.5, df / (df + t * t))))


def f_sf(f: float, df1: float, df2: float) -> float:
    if math.isinf(f):
        return 0.0
    if f <= 0:
        return 1.0
    return min(1.0, max(0.0, betainc(0.5 * df2, 0.5 * df1, df2 / (df2 + df1 * f))))


def welch_t(a, b) -> tuple[float, float, float]:
    """(t, Welch-Satterthwaite df, two-sided p)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each sample needs at least two values")
    na, nb = len(a), len(b)
    va, vb = float(a.var(ddof=1)), float(b.var(ddof=1))
    diff = float(a.mean() - b.mean())
    se2 = va / na + vb / nb
    denom = (va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1)
    if se2 == 0 or denom == 0:
        # zero (or underflowed) variance in both samples
        if diff == 0:
            return 0.0, float(na + nb - 2), 1.0
        return math.copysign(math.inf, diff), float(na + nb - 2), 0.0
    t = diff / math.sqrt(se2)
    df = se2 ** 2 / denom
    return t, df, t_sf_two_sided(t, df)


@dataclass
class AnovaResult:
    F: float
    df1: int
    df2: int
    p: float
    ms_within: float


def anova_f(groups) -> AnovaResult:
    groups = [np.asarray(g, dtype=float) for g in groups]
    if len(groups) < 2 or any(len(g) < 2 for g in groups):
        raise ValueError("need at least two groups of at least two samples")
    allv = np.concatenate(groups)
    grand = allv.mean()
    ssb = float(sum(len(g) * (g.mean() - grand) ** 2 for g in groups))
    ssw = float(sum(((g - g.mean()) ** 2).sum() for g in groups))
    df1, df2 = len(groups) - 1, len(allv) - len(groups)
    msw = ssw / df2
    # sums of squares are computed in floating point; treat tiny ones as exact zeros
    scale = float(np.sum((allv - grand) ** 2))
    if ssw <= 1e-14 * max(scale, 1e-300):
        if ssb <= 1e-14 * max(scale, 1e-300):
            return AnovaResult(0.0, df1, df2, 1.0, 0.0)
        return AnovaResult(math.inf, df1, df2, 0.0, 0.0)
    F = (ssb / df1) / msw
    return AnovaResult(F, df1, df2, f_sf(F, df1, df2), msw)


# studentized range q(alpha=0.05; k, df) for k = 2..6
_Q_DF = (5, 6, 7, 8, 9, 10, 20, 30, 40, 60, 120, math.inf)
_Q_TABLE = (
    (3.635, 4.602, 5.218, 5.673, 6.033),
    (3.460, 4.339, 4.896, 5.305, 5.628),
    (3.344, 4.165, 4.681, 5.060, 5.359),
    (3.261, 4.041, 4.529, 4.886, 5.167),
    (3.199, 3.948, 4.415, 4.755, 5.024),
    (3.151, 3.877, 4.327, 4.654, 4.912),
    (2.950, 3.578, 3.958, 4.232, 4.445),
    (2.888, 3.486, 3.845, 4.102, 4.301),
    (2.858, 3.442, 3.791, 4.039, 4.232),
    (2.829, 3.399, 3.737, 3.977, 4.163),
    (2.800, 3.356, 3.685, 3.917, 4.096),
    (2.772, 3.314, 3.633, 3.858, 4.030),
)


def q_critical(k: int, df: float) -> float:
    """Tukey critical value at alpha 0.05, linear in df between table rows (1/df past 120)."""
    if not 2 <= k <= 6:
        raise ValueError("table covers 2 to 6 groups")
    if df < _Q_DF[0]:
        raise ValueError(f"error df {df} below the table minimum {_Q_DF[0]}")
    col = k - 2
    for i in range(len(_Q_DF) - 1):
        lo, hi = _Q_DF[i], _Q_DF[i + 1]
        if lo <= df <= hi:
            qlo, qhi = _Q_TABLE[i][col], _Q_TABLE[i + 1][col]
            if math.isinf(hi):
                if math.isinf(df):
                    return qhi
                frac = (1.0 / lo - 1.0 / df) / (1.0 / lo)
            else:
                frac = (df - lo) / (hi - lo)
            return qlo + frac * (qhi - qlo)
    return _Q_TABLE[-1][col]


@dataclass
class TukeyPair:
    a: str
    b: str
    diff: float
    hsd: float
    significant: bool


def tukey_hsd(groups: dict, alpha: float = 0.05) -> list[TukeyPair]:
    """All-pairs comparison of balanced groups (name -> samples)."""
    if alpha != 0.05:
        raise ValueError("only alpha = 0.05 is tabulated")
    names = list(groups)
    arrays = [np.asarray(groups[n], dtype=float) for n in names]
    sizes = {len(g) for g in arrays}
    if len(sizes) != 1:
        raise ValueError("Tukey HSD here needs balanced groups")
    n = sizes.pop()
    res = anova_f(arrays)
    q = q_critical(len(arrays), res.df2)
    hsd = q * math.sqrt(res.ms_within / n)
    out = []
    for (i, a), (j, b) in combinations(enumerate(names), 2):
        diff = float(arrays[i].mean() - arrays[j].mean())
        out.append(TukeyPair(a, b, diff, hsd, abs(diff) > hsd))
    return out


@dataclass
class StatReport:
    pairwise: dict = field(default_factory=dict)  # "A|B" -> {t, df, p}
    anova: dict = field(default_factory=dict)
    tukey: list = field(default_factory=list)

    def to_json(self) -> str:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            if isinstance(v, list):
                return [clean(x) for x in v]
            return v
        return json.dumps(clean(asdict(self)), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = ["Pairwise Welch t-tests", f"{'pair':<24}{'t':>10}{'df':>9}{'p':>10}"]
        for key, r in self.pairwise.items():
            lines.append(f"{key.replace('|', ' vs '):<24}{r['t']:>10.4f}{r['df']:>9.2f}{r['p']:>10.4f}")
        if self.anova:
            a = self.anova
            lines += ["", f"ANOVA: F = {a['F']:.4f}, df = ({a['df1']}, {a['df2']}), p = {a['p']:.4f}"]
        if self.tukey:
            lines += ["", "Tukey HSD (alpha 0.05)"]
            for t in self.tukey:
                mark = "significant" if t["significant"] else "-"
                lines.append(f"{t['a'] + ' vs ' + t['b']:<24}{t['diff']:>10.4f}{t['hsd']:>10.4f}  {mark}")
        return "\n".join(lines) + "\n"


def stat_report(groups: dict) -> StatReport:
    """Welch t for every pair, ANOVA over all groups, and Tukey when groups are balanced."""
    names = list(groups)
    rep = StatReport()
    for a, b in combinations(names, 2):
        t, df, p = welch_t(groups[a], groups[b])
        rep.pairwise[f"{a}|{b}"] = {"t": t, "df": df, "p": p}
    if len(names) >= 2:
        res = anova_f([groups[n] for n in names])
        rep.anova = {"F": res.F, "df1": res.df1, "df2": res.df2, "p": res.p}
        try:
            rep.tukey = [asdict(p) for p in tukey_hsd(groups)]
        except ValueError:
            rep.tukey = []
    return rep
