"""On-disk formats: CSV matrices, JSON manifests, atomic writes.

A dataset directory contains ``manifest.json``, one CSV per slice and
(optionally) the true factors.  A fit-result directory contains the
estimated factors (``factors.json`` plus CSVs) and ``fit_report.json``.
Values are written with 17 significant digits so that load(save(x)) is
exact on doubles; every write goes through a temp file and an atomic
rename.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .core import Pf2Factors, SliceStack

__all__ = [
    "SCHEMA_VERSION",
    "atomic_write_text",
    "write_matrix",
    "read_matrix",
    "write_json",
    "read_json",
    "save_dataset",
    "load_dataset",
    "save_factors",
    "load_factors",
]

SCHEMA_VERSION = 1


def atomic_write_text(path, text: str):
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_matrix(path, M):
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    lines = "\r\n".join(",".join(format(v, ".17g") for v in row) for row in M)
    atomic_write_text(path, lines + "\r\n")


def read_matrix(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)


def write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def _slice_name(k):
    return f"X_{k:03d}.csv"


def _b_name(k):
    return f"B_{k:03d}.csv"


def save_dataset(out_dir, stack: SliceStack, truth: Pf2Factors | None, meta: dict):
    """Write slices, optional true factors and the manifest; returns the manifest."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "kind": "dataset",
        "I": stack.I,
        "J": list(stack.J),
        "K": stack.K,
        "slices": [_slice_name(k) for k in range(stack.K)],
        **meta,
    }
    for k, Xk in enumerate(stack):
        write_matrix(os.path.join(out_dir, _slice_name(k)), Xk)
    if truth is not None:
        manifest["true_rank"] = truth.rank
        manifest["true_factors"] = {
            "A": "A.csv",
            "D": "D.csv",
            "B": [_b_name(k) for k in range(truth.K)],
        }
        write_matrix(os.path.join(out_dir, "A.csv"), truth.A)
        write_matrix(os.path.join(out_dir, "D.csv"), truth.D)
        for k, Bk in enumerate(truth.B):
            write_matrix(os.path.join(out_dir, _b_name(k)), Bk)
    write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return manifest


def load_dataset(in_dir):
    """Read a dataset directory; returns (stack, truth_or_None, manifest)."""
    manifest = read_json(os.path.join(in_dir, "manifest.json"))
    slices = [read_matrix(os.path.join(in_dir, name)) for name in manifest["slices"]]
    stack = SliceStack(slices)
    declared = (manifest["I"], manifest["K"], tuple(manifest["J"]))
    if (stack.I, stack.K, stack.J) != declared:
        raise ValueError(
            f"dataset files do not match the manifest: parsed "
            f"{(stack.I, stack.K, stack.J)}, declared {declared}"
        )
    truth = None
    if "true_factors" in manifest:
        tf = manifest["true_factors"]
        truth = Pf2Factors(
            read_matrix(os.path.join(in_dir, tf["A"])),
            read_matrix(os.path.join(in_dir, tf["D"])),
            [read_matrix(os.path.join(in_dir, name)) for name in tf["B"]],
        )
        if truth.rank != manifest.get("true_rank", truth.rank):
            raise ValueError(
                f"true factors parse to rank {truth.rank}, manifest declares "
                f"{manifest['true_rank']}"
            )
    return stack, truth, manifest


def save_factors(out_dir, factors: Pf2Factors):
    """Write a factor set plus its small manifest (factors.json)."""
    os.makedirs(out_dir, exist_ok=True)
    entry = {
        "schema_version": SCHEMA_VERSION,
        "kind": "factors",
        "rank": factors.rank,
        "A": "A.csv",
        "D": "D.csv",
        "B": [_b_name(k) for k in range(factors.K)],
    }
    write_matrix(os.path.join(out_dir, "A.csv"), factors.A)
    write_matrix(os.path.join(out_dir, "D.csv"), factors.D)
    for k, Bk in enumerate(factors.B):
        write_matrix(os.path.join(out_dir, _b_name(k)), Bk)
    write_json(os.path.join(out_dir, "factors.json"), entry)
    return entry


def load_factors(in_dir) -> Pf2Factors:
    entry = read_json(os.path.join(in_dir, "factors.json"))
    return Pf2Factors(
        read_matrix(os.path.join(in_dir, entry["A"])),
        read_matrix(os.path.join(in_dir, entry["D"])),
        [read_matrix(os.path.join(in_dir, name)) for name in entry["B"]],
    )
