"""Coupled tensor decomposition, NeAT, behavior labeling and evaluation metrics."""

from ._bnpipe import (
    CoupledCpModel,
    CoupledNeatModel,
    CpModel,
    Error,
    NeatModel,
    NonnegMap,
    SparseTensor,
    TrainConfig,
    balanced_accuracy,
    behavior_to_matrix,
    class_distribution,
    classification_report,
    confusion,
    evaluate_model,
    evaluate_run,
    fbeta,
    fit_coupled_cp,
    fit_coupled_neat,
    fit_cp,
    fit_neat,
    grid_binarize,
    load_model,
    macro_f1,
    mcc,
    model_kind,
    parse_label,
    quadratic_weighted_kappa,
    read_coo,
    rmse_cp,
    run_sequence,
    sample_zeros,
    save_model,
    split,
    tag_components,
    validate,
    write_coo,
)

__all__ = [name for name in dir() if not name.startswith("_")]
