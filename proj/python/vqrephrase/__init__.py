# Copyright 2026 The vqrephrase Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# ==============================================================================
"""Entropy-controlled visual question rephrasing."""

import json

from vqrephrase._core import (
    Error,
    Experiment as _Experiment,
    bleu4,
    cider,
    default_config_json,
    delta_filter,
    delta_unit,
    desk_delta_grid,
    diversity,
    entropy,
    entropy_loss,
    evaluate as _evaluate,
    meteor_lite,
    reference_delta_grid,
    rouge_l,
    total_loss,
    verify,
    vqg_loss,
)

__all__ = [
    "Error",
    "Experiment",
    "bleu4",
    "cider",
    "default_config",
    "delta_filter",
    "delta_unit",
    "desk_delta_grid",
    "diversity",
    "entropy",
    "entropy_loss",
    "evaluate",
    "meteor_lite",
    "reference_delta_grid",
    "rouge_l",
    "total_loss",
    "verify",
    "vqg_loss",
]


def default_config():
    """The default experiment configuration as a dict."""
    return json.loads(default_config_json())


def evaluate(target_entropy, generated_entropy, sources, generated):
    """Metrics report for one sweep cell, as a dict."""
    return json.loads(_evaluate(target_entropy, generated_entropy, sources, generated))


class Experiment:
    """Pipeline steps over one experiment directory."""

    def __init__(self, out, config=None):
        self._impl = _Experiment(json.dumps(config or {}), str(out))

    @property
    def config(self):
        return json.loads(self._impl.config_json())

    def generate_data(self):
        return self._impl.generate_data()

    def train_vqa(self):
        return self._impl.train_vqa()

    def train(self, label):
        return self._impl.train(label)

    def sweep_delta_csv(self):
        return self._impl.sweep_delta_csv()

    def rephrase(self, scene_id, question, target_entropy, label="Sampling-FT"):
        return self._impl.rephrase(scene_id, question, target_entropy, label)
