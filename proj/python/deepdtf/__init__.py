"""Drug response prediction from multi-omics profiles and molecular graphs."""

import json

from ._core import (
    DeepDTFError,
    ParseError,
    UndefinedMetricError,
    __version__,
    accuracy,
    asw_integrate,
    auc,
    binarize_response,
    enrichment_score,
    exact_shapley,
    molecular_weight,
    pcc,
    r2,
    rmse,
    run_cli,
    sampled_shapley,
)
from . import _core


def parse_smiles(smiles, drug_id=""):
    """Molecular graph as {"nodes": [[9 codes]], "edges": [[u, v, 3 codes]]}."""
    return json.loads(_core.parse_smiles_json(smiles, drug_id))


def gsea_preranked(ranking, sets, weight=1.0, permutations=1000, min_size=5, seed=0):
    """`ranking` is [(gene, score)] sorted by descending score; `sets` maps names to gene lists."""
    items = list(sets.items()) if isinstance(sets, dict) else list(sets)
    return json.loads(_core.gsea_preranked_json(list(ranking), items, weight, permutations, min_size, seed))


__all__ = [
    "DeepDTFError",
    "ParseError",
    "UndefinedMetricError",
    "__version__",
    "accuracy",
    "asw_integrate",
    "auc",
    "binarize_response",
    "enrichment_score",
    "exact_shapley",
    "gsea_preranked",
    "molecular_weight",
    "parse_smiles",
    "pcc",
    "r2",
    "rmse",
    "run_cli",
    "sampled_shapley",
]
