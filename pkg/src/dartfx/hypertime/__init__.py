# SPDX-FileCopyrightText: 2024-present kulnor <pascal.heus@gmail.com>
#
# SPDX-License-Identifier: MIT

from dartfx.hypertime.builder import build, build_event, select_cluster_count
from dartfx.hypertime.dataset import Dataset, Measurement, load_csv, split_by_time, standardize, write_csv
from dartfx.hypertime.model import BuildConfig, FitConfig, HypertimeModel
from dartfx.hypertime.predict import density, model_error, predict_cell_count, predict_mean, residuals
from dartfx.hypertime.utils import load_model, save_model

__all__ = [
    "Dataset",
    "Measurement",
    "load_csv",
    "write_csv",
    "split_by_time",
    "standardize",
    "BuildConfig",
    "FitConfig",
    "HypertimeModel",
    "build",
    "build_event",
    "select_cluster_count",
    "density",
    "predict_mean",
    "predict_cell_count",
    "residuals",
    "model_error",
    "load_model",
    "save_model",
]
