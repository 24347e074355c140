# Copyright 2026 The MARS Authors.
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
"""Scaling-law fitting and LoRA rank search for multimodal models."""

from ._core import (
    ArgumentError,
    FitFailure,
    IdentifiabilityError,
    LawC,
    LawP,
    MarsError,
    Module,
    NumericRangeError,
    ValidationError,
    balanced_ve_rank,
    detect_convergence,
    fit_law_c,
    fit_law_p,
    run_cli,
    s1_true_perplexity,
)

__all__ = [
    "ArgumentError",
    "FitFailure",
    "IdentifiabilityError",
    "LawC",
    "LawP",
    "MarsError",
    "Module",
    "NumericRangeError",
    "ValidationError",
    "balanced_ve_rank",
    "detect_convergence",
    "fit_law_c",
    "fit_law_p",
    "run_cli",
    "s1_true_perplexity",
]
