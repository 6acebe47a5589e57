# Copyright 2026 The fedembed Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Federated sharing of embedding datasets through DP conditional models."""

from fedembed._fedembed import (
    CalibrationError,
    ConfigError,
    FedembedError,
    FormatError,
    NumericError,
    PrivacyBudgetError,
    ShapeError,
    ValidationError,
    accuracy,
    aggregate_shared,
    balanced_accuracy,
    calibrate_noise,
    canonical_config,
    clip_per_sample,
    compute_epsilon,
    interpolate_proba,
    load_dataset,
    noisy_aggregate,
    param_count,
    partition_dirichlet,
    partition_iid,
    rdp_subsampled_gaussian,
    report,
    run_experiment,
    save_dataset,
    select_lambda,
    split_train_val_test,
    synth_blobs,
    train_linear,
    wasserstein_1d,
    wasserstein_avg,
)

__version__ = "0.1.0"
