"""SQL analysis: parsing, operator extraction, skeletons, tree edit distance."""

from .ops import (
    PrimitiveOp,
    PrimitiveOpSet,
    default_catalog,
    extract_operators,
    extract_operators_detailed,
    load_catalog,
)
from .parser import parse_sql
from .skeleton import SkeletonNode, SqlSkeleton, skeletonize
from .ted import tree_edit_distance

__all__ = [
    "PrimitiveOp",
    "PrimitiveOpSet",
    "SkeletonNode",
    "SqlSkeleton",
    "default_catalog",
    "extract_operators",
    "extract_operators_detailed",
    "load_catalog",
    "parse_sql",
    "skeletonize",
    "tree_edit_distance",
]
