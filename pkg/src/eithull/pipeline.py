"""End-to-end orchestration: dataset generation, evaluation, reconstruction.

Record generation is embarrassingly parallel: record i is produced from
the derived seed (master_seed XOR i) alone, so worker count and resume
points never change the output bytes.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import cem
from .enclosure import ProbeGrid, grid_coefficients, indicator_matrix, ls_support_vector
from .femsolver import (
    DNMatrix,
    add_nd_noise,
    build_disk_mesh,
    dn_analytic_homogeneous,
    dn_from_nd,
    nd_matrix,
)
from .geometry import (
    HullError,
    Phantom,
    hull_from_support,
    phantom_from_text,
    phantom_to_text,
    relative_error,
    sample_test_phantom,
    sample_training_phantom,
    support_vector,
    true_hull,
)
from .network import NetworkWeights, pad_indicator, predict_support
from .storage import (
    DatasetRecord,
    append_dataset_records,
    count_complete_records,
    read_dataset,
    write_dataset_header,
)

HISTOGRAM_BIN_WIDTH = 2.0
HISTOGRAM_MAX = 120.0


@dataclass(frozen=True)
class GenerationConfig:
    count: int = 2000
    family: str = "train"
    refinement: int = 6
    order: int = 32
    noise: float = 10.0**-4.5
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.family not in ("train", "test"):
            raise ValueError("family must be 'train' or 'test'")


def derived_seed(master_seed: int, index: int) -> int:
    return (int(master_seed) ^ int(index)) & 0xFFFFFFFFFFFFFFFF


# Per-process state for record generation (mesh, reference ND, probing
# coefficients); built once per worker, reused across records.
_WSTATE: dict = {}


def _init_worker(refinement: int, order: int, family: str) -> None:
    mesh = build_disk_mesh(refinement)
    _WSTATE["mesh"] = mesh
    _WSTATE["order"] = order
    _WSTATE["family"] = family
    _WSTATE["nd_ref"] = nd_matrix(mesh, Phantom(()), order)
    grid = ProbeGrid()
    _WSTATE["grid"] = grid
    _WSTATE["coeffs"] = grid_coefficients(grid, order)


def _generate_record(args: tuple[int, int, float]) -> DatasetRecord:
    """Build record ``index`` from its derived seed.

    RNG draw order per record: phantom sampling, then the noise on the
    phantom ND matrix, then the noise on the homogeneous reference ND.
    """
    index, master_seed, noise = args
    seed = derived_seed(master_seed, index)
    rng = np.random.default_rng(seed)
    mesh, order = _WSTATE["mesh"], _WSTATE["order"]
    sampler = sample_training_phantom if _WSTATE["family"] == "train" else sample_test_phantom
    phantom = sampler(rng)
    nd_sigma = add_nd_noise(nd_matrix(mesh, phantom, order), noise, rng)
    nd_one = add_nd_noise(_WSTATE["nd_ref"], noise, rng)
    im = indicator_matrix(
        dn_from_nd(nd_sigma), dn_from_nd(nd_one), _WSTATE["grid"], _WSTATE["coeffs"]
    )
    return DatasetRecord(seed, phantom, im, pad_indicator(im), support_vector(phantom))


def generate_dataset(
    cfg: GenerationConfig, path, config_echo: str = "", resume: bool = False, progress=None
) -> int:
    """Generate records into the dataset container at ``path``.

    With resume, records already intact in an existing file are kept and
    generation continues at the next index.  Returns the number of records
    generated in this call.  The manifest (path + '.manifest.txt') is
    rewritten from the finished file.
    """
    start = 0
    if resume and os.path.exists(path):
        start = min(count_complete_records(path), cfg.count)
    if start == 0:
        write_dataset_header(path, cfg.count, config_echo)
    tasks = [(i, cfg.master_seed, cfg.noise) for i in range(start, cfg.count)]

    done = 0
    chunk: list[DatasetRecord] = []

    def flush():
        nonlocal chunk
        if chunk:
            append_dataset_records(path, chunk)
            chunk = []

    if cfg.workers <= 1 or len(tasks) <= 1:
        _init_worker(cfg.refinement, cfg.order, cfg.family)
        for task in tasks:
            chunk.append(_generate_record(task))
            done += 1
            if len(chunk) >= 25:
                flush()
            if progress:
                progress(start + done, cfg.count)
    else:
        with ProcessPoolExecutor(
            max_workers=cfg.workers,
            initializer=_init_worker,
            initargs=(cfg.refinement, cfg.order, cfg.family),
        ) as pool:
            for rec in pool.map(_generate_record, tasks, chunksize=8):
                chunk.append(rec)
                done += 1
                if len(chunk) >= 25:
                    flush()
                if progress:
                    progress(start + done, cfg.count)
    flush()
    write_manifest(path, config_echo)
    return done


def write_manifest(dataset_path, config_echo: str) -> None:
    """Structured-text manifest: config echo plus per-record seeds and
    phantom descriptors."""
    records, _, declared = read_dataset(dataset_path, verify=False)
    lines = ["# eithull dataset manifest", f"declared_count = {declared}", "[config]"]
    lines += config_echo.rstrip("\n").split("\n") if config_echo else []
    lines.append("[records]")
    for i, rec in enumerate(records):
        lines.append(f"{i} seed={rec.seed} phantom={phantom_to_text(rec.phantom)}")
    with open(str(dataset_path) + ".manifest.txt", "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class CaseResult:
    index: int
    ls: HullError
    learned: HullError


@dataclass(frozen=True)
class EvaluationReport:
    cases: list[CaseResult]
    ls_median: float
    learned_median: float
    learned_wins: int
    ls_false_pos_mass: float
    ls_false_neg_mass: float
    histogram_edges: np.ndarray
    ls_histogram: np.ndarray
    learned_histogram: np.ndarray


def _histogram(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    edges = np.arange(0.0, HISTOGRAM_MAX + HISTOGRAM_BIN_WIDTH, HISTOGRAM_BIN_WIDTH)
    clipped = np.minimum(values, HISTOGRAM_MAX - 1e-9)  # overflow goes to the last bin
    counts, _ = np.histogram(clipped, bins=edges)
    return edges, counts


def evaluate_dataset(records, weights: NetworkWeights, grid: ProbeGrid | None = None) -> EvaluationReport:
    """Score least-squares and learned hulls against the true hulls."""
    grid = grid or ProbeGrid()
    cases = []
    for i, rec in enumerate(records):
        truth = true_hull(rec.phantom)
        ls_err = relative_error(truth, hull_from_support(ls_support_vector(rec.indicator, grid)))
        nn_err = relative_error(truth, hull_from_support(predict_support(weights, rec.indicator)))
        cases.append(CaseResult(i, ls_err, nn_err))
    ls_totals = np.array([c.ls.total for c in cases])
    nn_totals = np.array([c.learned.total for c in cases])
    edges, ls_hist = _histogram(ls_totals)
    _, nn_hist = _histogram(nn_totals)
    return EvaluationReport(
        cases=cases,
        ls_median=float(np.median(ls_totals)),
        learned_median=float(np.median(nn_totals)),
        learned_wins=int(np.sum(nn_totals < ls_totals)),
        ls_false_pos_mass=float(np.sum([c.ls.false_pos for c in cases])),
        ls_false_neg_mass=float(np.sum([c.ls.false_neg for c in cases])),
        histogram_edges=edges,
        ls_histogram=ls_hist,
        learned_histogram=nn_hist,
    )


def report_text(report: EvaluationReport) -> str:
    lines = [
        "# eithull evaluation report",
        f"cases = {len(report.cases)}",
        f"ls_median = {report.ls_median!r}",
        f"learned_median = {report.learned_median!r}",
        f"learned_wins = {report.learned_wins}",
        f"ls_false_pos_mass = {report.ls_false_pos_mass!r}",
        f"ls_false_neg_mass = {report.ls_false_neg_mass!r}",
        "[histogram]  # bin_lo bin_hi ls_count learned_count; overflow clipped into the last bin",
    ]
    for b in range(len(report.ls_histogram)):
        lines.append(
            f"{report.histogram_edges[b]:g} {report.histogram_edges[b + 1]:g} "
            f"{report.ls_histogram[b]} {report.learned_histogram[b]}"
        )
    lines.append("[cases]  # index ls_total ls_fp ls_fn learned_total learned_fp learned_fn")
    for c in report.cases:
        lines.append(
            f"{c.index} {c.ls.total!r} {c.ls.false_pos!r} {c.ls.false_neg!r} "
            f"{c.learned.total!r} {c.learned.false_pos!r} {c.learned.false_neg!r}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# single-case reconstruction and synthetic CEM measurements


@dataclass(frozen=True)
class Reconstruction:
    ls_support: np.ndarray
    learned_support: np.ndarray
    ls_hull: np.ndarray
    learned_hull: np.ndarray


def reconstruct_from_dn(
    dn_sigma: DNMatrix, dn_one: DNMatrix, weights: NetworkWeights, grid: ProbeGrid | None = None
) -> Reconstruction:
    grid = grid or ProbeGrid()
    im = indicator_matrix(dn_sigma, dn_one, grid)
    ls_sv = ls_support_vector(im, grid)
    nn_sv = predict_support(weights, im)
    return Reconstruction(ls_sv, nn_sv, hull_from_support(ls_sv), hull_from_support(nn_sv))


def reconstruct_from_measurement(
    meas: cem.CEMMeasurement,
    weights: NetworkWeights,
    order: int,
    analytic_reference: bool = False,
) -> Reconstruction:
    """Measurement -> trig basis -> background scale -> DN pair -> hulls."""
    layout = cem.ElectrodeLayout(count=meas.electrode_count)
    trig = cem.convert_measurement(meas)
    scale = 1.0
    if trig.reference is not None:
        scale = cem.estimate_background_scale(trig, layout)
    order = min(order, layout.count - 2)
    dn_sigma, dn_one = cem.dn_from_electrode_voltages(
        trig, layout, order, scale=scale, analytic_reference=analytic_reference
    )
    return reconstruct_from_dn(dn_sigma, dn_one, weights)


def reconstruction_text(recon: Reconstruction) -> str:
    lines = ["# eithull reconstruction"]
    lines.append("ls_support = " + " ".join(repr(v) for v in recon.ls_support))
    lines.append("learned_support = " + " ".join(repr(v) for v in recon.learned_support))
    for name, hull in (("ls_hull", recon.ls_hull), ("learned_hull", recon.learned_hull)):
        lines.append(f"[{name}]  # {len(hull)} vertices, CCW")
        for v in hull:
            lines.append(f"{v[0]!r} {v[1]!r}")
    return "\n".join(lines) + "\n"


def simulate_cem_measurement(
    phantom: Phantom,
    layout: cem.ElectrodeLayout,
    zeta,
    refinement: int = 6,
    amplitude: float = 1.0,
    include_reference: bool = True,
) -> cem.CEMMeasurement:
    """Synthetic adjacent-pattern tank measurement with optional reference."""
    mesh = build_disk_mesh(refinement)
    patterns = amplitude * cem.adjacent_patterns(layout.count)
    meas = cem.measure(mesh, phantom, layout, zeta, patterns, basis="adjacent")
    reference = None
    if include_reference:
        reference = cem.measure(mesh, Phantom(()), layout, zeta, patterns, basis="adjacent").voltages
    return cem.CEMMeasurement(meas.currents, meas.voltages, "adjacent", reference)
