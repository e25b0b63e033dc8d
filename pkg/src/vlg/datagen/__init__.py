"""Procedural garments, renders, prompts and dataset manifests."""

from .dataset import Dataset, DatasetConfig, ManifestRow, build_dataset
from .garments import ParamRecord, build_pattern, make_rng, sample_garment
from .prompts import PromptRecord, gen_prompt
from .render import DEFAULT_SPEC, RenderSpec, perturb_spec, render

__all__ = ["Dataset", "DatasetConfig", "ManifestRow", "build_dataset", "ParamRecord",
           "build_pattern", "make_rng", "sample_garment", "PromptRecord", "gen_prompt",
           "DEFAULT_SPEC", "RenderSpec", "perturb_spec", "render"]
