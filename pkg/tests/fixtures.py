"""Published per-dataset adjusted homophily and the routing table it implies."""

TABLE1_H_ADJ = {
    "Cora": 0.77, "CiteSeer": 0.67, "PubMed": 0.69, "Amazon-Photo": 0.78, "Coauthor-CS": 0.76,
    "Coauthor-Physics": 0.85, "WikiCS": 0.57, "ogbn-arxiv": 0.41, "Minesweeper": 0.01,
    "Tolokers": 0.09, "Amazon-Ratings": 0.14, "Roman-empire": -0.05, "Questions": 0.02,
}

_HETERO = ["Amazon-Ratings", "Minesweeper", "Questions", "Roman-empire", "Tolokers"]

# tau -> datasets routed to Pipeline B
ROUTING_TABLE = {
    -0.1: [],
    0.0: ["Roman-empire"],
    0.1: ["Minesweeper", "Questions", "Roman-empire", "Tolokers"],
    0.2: _HETERO,
    0.3: _HETERO,
    0.4: _HETERO,
    0.5: sorted(_HETERO + ["ogbn-arxiv"]),
}

# synthetic graphs spanning the homophily range (realized h_adj ~0.82, ~0.11, ~-0.29)
from cfgraph import SbmSpec  # noqa: E402

EXACTNESS_GRAPHS = {
    "homophilous": SbmSpec(n=300, num_classes=2, p_in=0.05, p_out=0.005, seed=0),
    "weak": SbmSpec(n=300, num_classes=2, p_in=0.025, p_out=0.02, seed=0),
    "heterophilous": SbmSpec(n=300, num_classes=2, p_in=0.02, p_out=0.04, seed=2),
}
EXACTNESS_H_TARGETS = {"homophilous": 0.8, "weak": 0.1, "heterophilous": -0.3}

# closed-form accuracy oracles
SBM_EASY = SbmSpec(n=400, num_classes=2, p_in=0.05, p_out=0.005, feature_dim=16, seed=0)
SBM_HETERO = SbmSpec(n=600, num_classes=4, p_in=0.005, p_out=0.03, feature_dim=16,
                     class_mean_separation=2.0, seed=1)

# sparse graph for the locality timing
SBM_SCALE = SbmSpec(n=100_000, num_classes=4, p_in=4e-5, p_out=4e-6, feature_dim=32, seed=0)
