"""Build the dataset and vertical split an :class:`ExperimentConfig` describes."""
from .config import ExperimentConfig
from .data import (SplitSpec, first_k_split, gen_credit_like, gen_synthetic, load_csv,
                   vertical_partition)


def load_dataset(cfg: ExperimentConfig):
    if cfg.source == "csv":
        exclude = [c.strip() for c in cfg.exclude_columns.split(",") if c.strip()]
        return load_csv(cfg.csv_path, label_column=cfg.label_column, exclude_columns=exclude)
    if cfg.source == "credit_like":
        return gen_credit_like(cfg.n, seed=cfg.seed)
    return gen_synthetic(cfg.n, cfg.d_per_client, cfg.classes, cfg.task, cfg.noise, seed=cfg.seed)


def build_split(cfg: ExperimentConfig, dataset=None):
    dataset = load_dataset(cfg) if dataset is None else dataset
    first = cfg.first_client_columns or dataset.d // 2
    spec = SplitSpec(first_k_split(dataset.d, first), cfg.overlap_size, seed=cfg.seed,
                     test_size=cfg.test_size)
    split = vertical_partition(dataset, spec)
    return split.standardized() if cfg.standardize else split
