"""Pipeline routing by adjusted homophily of the training subgraph."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from .data import Dataset
from .errors import NoTrainEdges, ValidationError
from .graph import adjusted_homophily

DEFAULT_TAU = 0.2
PIPELINES = ("A", "B")


@dataclass(frozen=True)
class RoutingDecision:
    h_adj: float | None
    tau: float
    pipeline: str
    reason: str  # "computed" or "hand-assigned"
    name: str = ""

    def to_json(self):
        return asdict(self)


def decide(h_adj, tau=DEFAULT_TAU, name=""):
    """A when h_adj >= tau, else B."""
    return RoutingDecision(float(h_adj), float(tau), "A" if h_adj >= tau else "B", "computed", name)


def route(ds: Dataset, tau=DEFAULT_TAU) -> RoutingDecision:
    """Route ``ds`` from its training labels only.

    Multi-label datasets and datasets without training edges cannot be
    routed automatically and need ``ds.pipeline_override``.
    """
    override = ds.pipeline_override
    if override is not None and override not in PIPELINES:
        raise ValidationError(f"pipeline override must be one of {PIPELINES}")
    if ds.multilabel:
        if override is None:
            raise ValidationError("multi-label datasets must be hand-assigned to a pipeline")
        return RoutingDecision(None, float(tau), override, "hand-assigned", ds.name)
    try:
        h = adjusted_homophily(ds.graph, ds.y, ds.train_mask & ~ds.removed)
    except NoTrainEdges:
        if override is None:
            raise NoTrainEdges("no training edges; a hand-assigned pipeline override is required") from None
        return RoutingDecision(None, float(tau), override, "hand-assigned", ds.name)
    if override is not None:
        return RoutingDecision(h, float(tau), override, "hand-assigned", ds.name)
    return decide(h, tau, ds.name)


def tau_sweep(items, taus):
    """Decisions for every (item, tau); ``items`` are datasets or (name, h_adj) pairs.

    Returns rows ``{"tau", "name", "h_adj", "pipeline", "reason"}`` ordered by
    tau, then input order.
    """
    rows = []
    for tau in taus:
        for it in items:
            if isinstance(it, Dataset):
                d = route(it, tau)
            else:
                name, h = it
                d = decide(h, tau, name)
            rows.append({"tau": float(tau), "name": d.name, "h_adj": d.h_adj,
                         "pipeline": d.pipeline, "reason": d.reason})
    return rows


def pipeline_b_sets(rows):
    """{tau: sorted names routed to B} from :func:`tau_sweep` rows."""
    out = {}
    for r in rows:
        out.setdefault(r["tau"], [])
        if r["pipeline"] == "B":
            out[r["tau"]].append(r["name"])
    return {t: sorted(v) for t, v in out.items()}
