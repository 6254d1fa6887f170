"""Fitness, precision and generalization of a simulated log against a variant split.

Frequency-aware scores compare variant multiplicities; the absolute scores
only check presence. Tr is the training log, Te the held-out test log and Sim
the simulated log.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

from .log import EventLog, VariantTable

CSV_COLUMNS = (
    "model", "fold_id", "hp_profile", "seed",
    "F", "P", "G", "F_A", "P_A", "G_A",
    "size_tr", "size_te", "size_sim", "rescaled",
)


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class MetricReport:
    f_pmsl: float
    p_pmsl: float
    g_pmsl: float
    f_a_pmsl: float
    p_a_pmsl: float
    g_a_pmsl: float
    size_tr: int
    size_te: int
    size_sim: int
    n_var_tr: int
    n_var_te: int
    n_var_sim: int
    rescaled: bool = False

    def as_dict(self) -> dict:
        return asdict(self)

    def csv_row(self, model: str, fold_id: str | int, hp_profile: str, seed: int) -> list[str]:
        return [
            str(model), str(fold_id), hp_profile, str(seed),
            *(repr(float(v)) for v in (
                self.f_pmsl, self.p_pmsl, self.g_pmsl, self.f_a_pmsl, self.p_a_pmsl, self.g_a_pmsl
            )),
            str(self.size_tr), str(self.size_te), str(self.size_sim), str(int(self.rescaled)),
        ]


def _check(tr: EventLog, te: EventLog, sim: EventLog) -> None:
    if len(tr) == 0:
        raise MetricError("training log is empty")
    if len(te) == 0:
        raise MetricError("test log is empty; generalization is undefined")
    if len(sim) == 0:
        raise MetricError("simulated log is empty; precision is undefined")


def freq_metrics(
    tr: EventLog, te: EventLog, sim: EventLog, allow_rescale: bool = False
) -> tuple[float, float, float, bool]:
    """Frequency-aware (F, P, G) plus whether Sim counts were rescaled.

    When sizes differ and ``allow_rescale`` is set, every Sim count is scaled
    by (|Tr| + |Te|) / |Sim| before taking minima.
    """
    _check(tr, te, sim)
    size_orig = len(tr) + len(te)
    rescaled = len(sim) != size_orig
    if rescaled and not allow_rescale:
        raise MetricError(
            f"|Sim| = {len(sim)} differs from |Tr| + |Te| = {size_orig}; pass allow_rescale to correct"
        )
    scale = size_orig / len(sim) if rescaled else 1.0
    v_tr, v_te, v_sim = tr.variants, te.variants, sim.variants
    v_orig = v_tr + v_te
    f = sum(min(v_sim[v] * scale, n) for v, n in v_tr.items()) / len(tr)
    p = sum(min(n * scale, v_orig[v]) for v, n in v_sim.items()) / (len(sim) * scale)
    g = sum(min(v_sim[v] * scale, n) for v, n in v_te.items()) / len(te)
    return f, p, g, rescaled


def abs_metrics(tr: EventLog, te: EventLog, sim: EventLog) -> tuple[float, float, float]:
    """Presence-only (F_A, P_A, G_A)."""
    _check(tr, te, sim)
    s_tr, s_te, s_sim = set(tr.variants), set(te.variants), set(sim.variants)
    f = len(s_tr & s_sim) / len(s_tr)
    p = len(s_sim & (s_tr | s_te)) / len(s_sim)
    g = len(s_te & s_sim) / len(s_te)
    return f, p, g


def evaluate(tr: EventLog, te: EventLog, sim: EventLog, allow_rescale: bool = False) -> MetricReport:
    f, p, g, rescaled = freq_metrics(tr, te, sim, allow_rescale)
    fa, pa, ga = abs_metrics(tr, te, sim)
    return MetricReport(
        f, p, g, fa, pa, ga,
        len(tr), len(te), len(sim),
        len(tr.variants), len(te.variants), len(sim.variants),
        rescaled,
    )


def variant_table_metrics(tr: VariantTable, te: VariantTable, sim: VariantTable) -> MetricReport:
    """Convenience wrapper for callers holding variant tables instead of logs."""
    return evaluate(EventLog.from_variants(tr), EventLog.from_variants(te), EventLog.from_variants(sim))
