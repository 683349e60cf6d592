"""Random multi-modal target functions, noisy sampling and the grid oracle."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.typing as npt

from neural_globopt.exceptions import GenerationFailedError
from neural_globopt.models import PRESETS, CaseRecord, DifficultyPreset
from neural_globopt.seeding import FUNCTION_STREAM, NOISE_STREAM, derive_seed, make_rng
from neural_globopt.spline import (
    ORACLE_GRID,
    FloatArray,
    GridSpec,
    KnotVector,
    SplineFit,
    basis_matrix,
    fit_interpolating_spline,
    grid_argmin,
    spline_argmin,
    spline_derivative_at,
)

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 1000
ARGMIN_WINDOW = (0.25, 0.75)
DERIVATIVE_TOLERANCE = 0.1
SAMPLE_JITTER = 0.2

# Coefficient recipe ranges. Well widths are fractions of the preset's
# largest knot spacing; decoy wells sit this far from either end.
BOWL_CENTER = (0.35, 0.65)
BOWL_DEPTH = (0.1, 0.3)
BOWL_WIDTH = (0.3, 0.5)
WELL_DEPTH = (1.0, 2.0)
WELL_WIDTH = (0.5, 0.8)
DECOY_ZONE = (0.02, 0.16)
OSC_AMPLITUDE = (0.02, 0.05)
OSC_WAVELENGTH = (0.05, 0.2)

__all__ = [
    "PRESETS",
    "Case",
    "NoisySamples",
    "TargetFunction",
    "count_local_minima",
    "exhaustive_argmin",
    "generate_function",
    "make_case",
    "noise_sigma",
    "read_case_file",
    "sample_noisy",
    "write_case_file",
]


@dataclass(frozen=True)
class TargetFunction:
    """Ground-truth cubic B-spline f(x) = sum_i c_i B_i(x) with its oracle minimum."""

    knots: KnotVector
    coeffs: FloatArray
    argmin_true: float
    value_range: float
    seed: int

    @property
    def curve(self) -> SplineFit:
        return SplineFit(knots=self.knots, coeffs=self.coeffs, source_n=0)

    def evaluate(self, xs: npt.ArrayLike) -> FloatArray:
        return basis_matrix(self.knots, xs) @ self.coeffs

    def derivative(self, xs: npt.ArrayLike) -> FloatArray:
        return spline_derivative_at(self.curve, xs)


@dataclass(frozen=True)
class NoisySamples:
    """Observed samples y_i = f(x_i) + eps_i."""

    xs: FloatArray
    ys: FloatArray
    sigma: float
    seed: int


@dataclass(frozen=True)
class Case:
    """One problem instance with everything the model and the baseline consume."""

    seed: int
    preset: str
    target: TargetFunction
    samples: NoisySamples
    fit: SplineFit
    x0: float
    dys: FloatArray
    cs: FloatArray

    @property
    def x_star(self) -> float:
        return self.target.argmin_true

    @property
    def spline_error(self) -> float:
        return abs(self.x0 - self.x_star)


def _random_knots(rng: np.random.Generator, spacing: tuple[float, float]) -> KnotVector:
    lo, hi = spacing
    interior: list[float] = []
    position = rng.uniform(lo, hi)
    while position < 1.0 - lo / 2:
        interior.append(position)
        position += rng.uniform(lo, hi)
    return KnotVector.clamped(interior)


def _well(t: FloatArray, position: float, depth: float, width: float) -> FloatArray:
    return -depth * np.exp(-0.5 * ((t - position) / width) ** 2)


def _random_coeffs(
    rng: np.random.Generator, knots: KnotVector, preset: DifficultyPreset
) -> FloatArray:
    """Bowl, wells, oscillation and jitter, sampled at the Greville abscissae.

    The deepest well sits at the bowl centre. Decoy wells near both ends
    bottom out within ``decoy_margin`` (relative) of its depth once the bowl
    is added back. Wells combine through their lower envelope, so
    overlapping decoys never deepen each other.
    """
    t = knots.greville()
    center = rng.uniform(*BOWL_CENTER)
    bowl_depth = rng.uniform(*BOWL_DEPTH)
    bowl_width = rng.uniform(*BOWL_WIDTH)
    bowl = bowl_depth * ((t - center) / bowl_width) ** 2

    h_hi = preset.knot_spacing_range[1]
    depth = rng.uniform(*WELL_DEPTH)
    wells = _well(t, center, depth, h_hi * rng.uniform(*WELL_WIDTH))
    lo, hi = preset.decoy_count
    for _ in range(int(rng.integers(lo, hi, endpoint=True))):
        offset = rng.uniform(*DECOY_ZONE)
        position = offset if rng.random() < 0.5 else 1.0 - offset
        floor = depth * (1.0 - rng.uniform(*preset.decoy_margin))
        lift = bowl_depth * ((position - center) / bowl_width) ** 2
        decoy = _well(t, position, floor + lift, h_hi * rng.uniform(*WELL_WIDTH))
        wells = np.minimum(wells, decoy)

    amplitude = rng.uniform(*OSC_AMPLITUDE)
    wavelength = rng.uniform(*OSC_WAVELENGTH)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    oscillation = preset.oscillation_strength * amplitude * np.sin(2.0 * math.pi * t / wavelength + phase)
    jitter = rng.uniform(-preset.coeff_jitter, preset.coeff_jitter, size=t.size)
    return bowl + wells + oscillation + jitter


def generate_function(
    preset: DifficultyPreset, seed: int, grid: GridSpec = ORACLE_GRID
) -> TargetFunction:
    """Rejection-sample a target whose grid minimum lies in [0.25, 0.75].

    Candidates are also rejected when |f'(x*)| > 0.1 * (max f - min f) on the
    grid.
    """
    rng = make_rng(seed)
    points = grid.points()
    for attempt in range(1, MAX_ATTEMPTS + 1):
        knots = _random_knots(rng, preset.knot_spacing_range)
        coeffs = _random_coeffs(rng, knots, preset)
        values = basis_matrix(knots, points) @ coeffs
        x_star = grid_argmin(points, values)
        if not ARGMIN_WINDOW[0] <= x_star <= ARGMIN_WINDOW[1]:
            continue
        value_range = float(np.max(values) - np.min(values))
        slope = spline_derivative_at(SplineFit(knots, coeffs, 0), [x_star])[0]
        if value_range <= 0.0 or abs(slope) > DERIVATIVE_TOLERANCE * value_range:
            continue
        logger.debug(f"Accepted function for seed {seed} after {attempt} attempts")
        return TargetFunction(knots, coeffs, x_star, value_range, seed)
    raise GenerationFailedError(MAX_ATTEMPTS, seed)


def noise_sigma(value_range: float, noise_multiplier: float) -> float:
    """sigma = sqrt((range / 10)^2 * nu)."""
    return math.sqrt((value_range / 10.0) ** 2 * noise_multiplier)


def sample_positions(n: int, rng: np.random.Generator) -> FloatArray:
    """n equally spaced points with the interior ones jittered by +-20% of the spacing."""
    spacing = 1.0 / (n - 1)
    xs = np.arange(n, dtype=np.float64) * spacing
    xs[1:-1] += rng.uniform(-SAMPLE_JITTER, SAMPLE_JITTER, size=n - 2) * spacing
    xs[-1] = 1.0
    return xs


def sample_noisy(f: TargetFunction, preset: DifficultyPreset, seed: int) -> NoisySamples:
    """Noisy samples whose noise level follows the noiseless range over the drawn xs."""
    rng = make_rng(seed)
    xs = sample_positions(preset.n_samples, rng)
    clean = f.evaluate(xs)
    sigma = noise_sigma(float(np.max(clean) - np.min(clean)), preset.noise_multiplier)
    if sigma == 0.0:
        ys = clean.copy()
    else:
        ys = clean + sigma * rng.standard_normal(xs.size)
    return NoisySamples(xs=xs, ys=ys, sigma=sigma, seed=seed)


def exhaustive_argmin(f: TargetFunction, grid: GridSpec = ORACLE_GRID) -> float:
    """Grid point minimising f; ties (see ``grid_argmin``) go to the smallest x."""
    points = grid.points()
    return grid_argmin(points, f.evaluate(points))


def count_local_minima(values: npt.ArrayLike) -> int:
    """Interior grid points strictly below both neighbours."""
    v = np.asarray(values, dtype=np.float64)
    return int(np.count_nonzero((v[1:-1] < v[:-2]) & (v[1:-1] < v[2:])))


def _case_from_parts(
    seed: int, preset_name: str, target: TargetFunction, samples: NoisySamples, grid: GridSpec
) -> Case:
    fit = fit_interpolating_spline(samples.xs, samples.ys)
    return Case(
        seed=seed,
        preset=preset_name,
        target=target,
        samples=samples,
        fit=fit,
        x0=spline_argmin(fit, grid),
        dys=spline_derivative_at(fit, samples.xs),
        # n + 2 coefficients; dropping the ends aligns them with the samples
        cs=np.array(fit.coeffs[1:-1]),
    )


def make_case(preset: DifficultyPreset, case_seed: int, grid: GridSpec = ORACLE_GRID) -> Case:
    """Target, samples, spline fit and model inputs for one case seed."""
    target = generate_function(preset, derive_seed(case_seed, FUNCTION_STREAM), grid)
    samples = sample_noisy(target, preset, derive_seed(case_seed, NOISE_STREAM))
    return _case_from_parts(case_seed, preset.name, target, samples, grid)


def to_record(case: Case) -> CaseRecord:
    """Serialisable form of a case."""
    return CaseRecord(
        knots=case.target.knots.knots.tolist(),
        coeffs=case.target.coeffs.tolist(),
        argmin_true=case.target.argmin_true,
        value_range=case.target.value_range,
        xs=case.samples.xs.tolist(),
        ys=case.samples.ys.tolist(),
        sigma=case.samples.sigma,
        seed=case.seed,
        preset=case.preset,
    )


def from_record(record: CaseRecord, grid: GridSpec = ORACLE_GRID) -> Case:
    """Rebuild a case; the spline fit is recomputed from the stored samples."""
    target = TargetFunction(
        knots=KnotVector(np.array(record.knots)),
        coeffs=np.array(record.coeffs),
        argmin_true=record.argmin_true,
        value_range=record.value_range,
        seed=derive_seed(record.seed, FUNCTION_STREAM),
    )
    samples = NoisySamples(
        xs=np.array(record.xs),
        ys=np.array(record.ys),
        sigma=record.sigma,
        seed=derive_seed(record.seed, NOISE_STREAM),
    )
    return _case_from_parts(record.seed, record.preset, target, samples, grid)


def write_case_file(case: Case, path: Path) -> None:
    """Write a case as JSON, creating parent directories."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_record(case).model_dump(mode="json"), indent=2))


def read_case_file(path: Path) -> Case:
    """Load a case file and refit its spline."""
    return from_record(CaseRecord.model_validate_json(path.read_text()))
