"""
A short active-learning comparison
==================================

Run a few acquisition functions on a duplicated blob pool, write the JSONL
records and print the per-size summary that the CSV export uses.
"""

import tempfile
from pathlib import Path

from infoacq.experiment import parse_config, read_records, run_experiment, summarize, summary_csv

CONFIG = """
dataset: {source: blobs, class_count: 4, per_class: 60, dim: 4, separation: 3, copies: 2, sigma: 0.05}
method: {tag: %s, batch_size: 5, m: 500}
model: {hidden_dims: [64]}
train: {epochs: 5, oversample_target: 512}
budget: 38
seeds: [0, 1, 2]
"""

out = Path(tempfile.mkdtemp())
records = []
for tag in ("Random", "BALD", "PowerBALD", "BatchBALD"):
    path = out / f"{tag}.jsonl"
    run_experiment(parse_config(CONFIG % tag), out=path)
    records += read_records(path).records

print(summary_csv(r for r in summarize(records) if r.train_size in (8, 38)))
print("records in", out)
