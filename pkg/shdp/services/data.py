"""Dataset ingestion, pooled standardization and the simulation generators."""

from typing import Dict, Any, List, Optional, Sequence, Tuple
import io
import logging
import math

import numpy as np
import pandas as pd

from shdp.errors import ArgumentError, DataParseError, DataValidationError
from shdp.models.dataset import Dataset, StandardizationRecord
from shdp.utils.helpers import atomic_write_text

logger = logging.getLogger(__name__)

DEFAULT_SIZES = (50, 19, 9, 22)
DEFAULT_SCHEMA = {
    'patient_col': 'patient',
    'population_col': 'population',
    'response_col': 'response',
    'value_col': 'value',
}
STANDARDIZED_TOLERANCE = 1e-12

# Components are ('normal', mean, variance) or ('gamma', shape, rate); each population is
# a list of (weight, component).
_HALF = 0.5


def _normal(mean: float) -> Tuple[str, float, float]:
    return ('normal', mean, _HALF)


DGPS: Dict[str, List[List[Tuple[float, Tuple[str, float, float]]]]] = {
    'main': [
        [(0.5, _normal(0.0)), (0.5, _normal(2.0))],
        [(0.5, _normal(2.0)), (0.5, _normal(4.0))],
        [(0.5, _normal(4.0)), (0.5, _normal(6.0))],
        [(0.5, _normal(6.0)), (0.5, _normal(8.0))],
    ],
    # The last patient of population 1 is an outlier drawn from N(4, 0.5).
    'dgp1': [
        [(1.0, _normal(0.0))],
        [(1.0, _normal(1.0))],
        [(1.0, _normal(1.0))],
        [(1.0, _normal(2.0))],
    ],
    'dgp2': [
        [(0.5, _normal(-1.0)), (0.5, _normal(1.0))],
        [(1.0, _normal(1.0))],
        [(1.0, _normal(1.0))],
        [(1.0, _normal(2.0))],
    ],
    'dgp3': [
        [(1.0, _normal(0.0))],
        [(1.0, ('gamma', 3.0, 3.0))],
        [(1.0, _normal(1.0))],
        [(1.0, _normal(2.0))],
    ],
    'dgp4': [
        [(0.7, _normal(-1.0)), (0.3, _normal(1.0))],
        [(1.0, _normal(1.0))],
        [(1.0, _normal(1.0))],
        [(1.0, _normal(2.0))],
    ],
    'dgp5': [
        [(1.0, ('gamma', 10.0, 10.0))],
        [(1.0, ('gamma', 10.0, 10.0))],
        [(1.0, ('gamma', 10.0, 10.0))],
        [(0.5, _normal(0.0)), (0.5, _normal(2.0))],
    ],
}
OUTLIER = {'dgp1': (0, _normal(4.0))}


def _component_moments(component: Tuple[str, float, float]) -> Tuple[float, float]:
    kind, p1, p2 = component
    if kind == 'normal':
        return p1, p2
    return p1 / p2, p1 / p2 ** 2


def dgp_moments(dgp: str, sizes: Sequence[int] = DEFAULT_SIZES) -> Tuple[np.ndarray, np.ndarray]:
    """Analytic mean and variance of each population's sample mean contributions.

    Returns (mean, variance) of a single draw, averaged over the population's patients
    (this only differs from the component mixture for the planted outlier).
    """
    spec = _dgp_spec(dgp)
    means, variances = np.zeros(len(spec)), np.zeros(len(spec))
    for j, mixture in enumerate(spec):
        mu = sum(w * _component_moments(c)[0] for w, c in mixture)
        second = sum(w * (_component_moments(c)[1] + _component_moments(c)[0] ** 2) for w, c in mixture)
        means[j], variances[j] = mu, second - mu ** 2
    if dgp in OUTLIER:
        j, component = OUTLIER[dgp]
        n = sizes[j]
        out_mean, out_var = _component_moments(component)
        means[j] = ((n - 1) * means[j] + out_mean) / n
        variances[j] = ((n - 1) * variances[j] + out_var) / n
    return means, variances


def _dgp_spec(dgp: str):
    if dgp not in DGPS:
        raise ArgumentError(f"Unknown data generating process: {dgp}. Must be one of {sorted(DGPS)}")
    return DGPS[dgp]


def _draw_component(component: Tuple[str, float, float], size: int, rng: np.random.Generator) -> np.ndarray:
    kind, p1, p2 = component
    if kind == 'normal':
        return rng.normal(p1, math.sqrt(p2), size=size)
    return rng.gamma(p1, 1.0 / p2, size=size)


def simulate(dgp: str, sizes: Sequence[int] = DEFAULT_SIZES, seed: Optional[int] = None,
             n_responses: int = 1) -> Dataset:
    """Draw a dataset from one of the simulation designs.

    Mixtures are sampled through an explicit component indicator, stored in
    ``metadata['components']`` (-1 marks the planted outlier).
    """
    spec = _dgp_spec(dgp)
    sizes = [int(n) for n in sizes]
    if len(sizes) != len(spec):
        raise ArgumentError(f"{dgp} has {len(spec)} populations, got {len(sizes)} sizes")
    if any(n < 1 for n in sizes):
        raise ArgumentError(f"Population sizes must be positive, got {sizes}")
    if n_responses < 1:
        raise ArgumentError(f"n_responses must be at least 1, got {n_responses}")
    rng = np.random.default_rng(seed)

    values, components = [], []
    for j, mixture in enumerate(spec):
        block = np.empty((sizes[j], n_responses))
        labels = np.empty((sizes[j], n_responses), dtype=np.int64)
        weights = np.array([w for w, _ in mixture])
        for m in range(n_responses):
            indicator = rng.choice(len(mixture), size=sizes[j], p=weights)
            draws = np.empty(sizes[j])
            for c, (_, component) in enumerate(mixture):
                mask = indicator == c
                draws[mask] = _draw_component(component, int(mask.sum()), rng)
            if dgp in OUTLIER and OUTLIER[dgp][0] == j:
                draws[-1] = _draw_component(OUTLIER[dgp][1], 1, rng)[0]
                indicator[-1] = -1
            block[:, m] = draws
            labels[:, m] = indicator
        values.append(block)
        components.append(labels)

    logger.info(f"Simulated {dgp} with sizes {sizes} and {n_responses} response(s)")
    return Dataset(values, population_labels=[str(j + 1) for j in range(len(spec))],
                   metadata={'dgp': dgp, 'seed': seed, 'components': components})


def standardize(ds: Dataset) -> Dataset:
    """Pool all populations per response, subtract the mean and divide by the sd (ddof=0)."""
    means, sds = np.zeros(ds.M), np.ones(ds.M)
    for m in range(ds.M):
        pooled = ds.pooled(m)
        mean, sd = float(np.mean(pooled)), float(np.std(pooled))
        if not sd > 0:
            raise DataValidationError(f"Response {ds.response_labels[m]} has zero spread; cannot standardize")
        if abs(mean) <= STANDARDIZED_TOLERANCE and abs(sd - 1.0) <= STANDARDIZED_TOLERANCE:
            mean, sd = 0.0, 1.0
        means[m], sds[m] = mean, sd
    record = StandardizationRecord(means, sds)
    values = [(block - record.mean[None, :]) / record.sd[None, :] for block in ds.values]
    return Dataset(values, ds.population_labels, ds.response_labels, ds.patient_ids,
                   standardization=record, metadata=ds.metadata)


def destandardize(ds: Dataset) -> Dataset:
    if ds.standardization is None:
        return ds
    record = ds.standardization
    values = [block * record.sd[None, :] + record.mean[None, :] for block in ds.values]
    return Dataset(values, ds.population_labels, ds.response_labels, ds.patient_ids,
                   metadata=ds.metadata)


def _schema(schema: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    merged = dict(DEFAULT_SCHEMA)
    merged.update({k: v for k, v in (schema or {}).items() if v is not None})
    return merged


def load_csv(path: str, schema: Optional[Dict[str, Any]] = None,
             severity_order: Optional[Sequence[str]] = None,
             response_order: Optional[Sequence[str]] = None) -> Dataset:
    """Read a long-format CSV (one row per patient and response) into a Dataset.

    Populations follow ``severity_order``; responses follow ``response_order`` or sorted
    order; patients are sorted by id within each population so row order never matters.
    """
    cols = _schema(schema)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except pd.errors.EmptyDataError:
        raise DataParseError(f"{path} is empty")
    except (OSError, UnicodeDecodeError) as e:
        raise DataParseError(f"Cannot read {path}: {str(e)}")
    if frame.empty:
        raise DataParseError(f"{path} has a header but no data rows")
    needed = [cols['patient_col'], cols['population_col'], cols['response_col'], cols['value_col']]
    missing = [c for c in needed if c not in frame.columns]
    if missing:
        raise DataParseError(f"{path} is missing column(s) {missing}", row=1)

    frame = frame[needed].copy()
    frame.columns = ['patient', 'population', 'response', 'value']
    frame['row'] = np.arange(len(frame)) + 2
    for column in ('patient', 'population', 'response', 'value'):
        blank = frame[column].str.strip() == ''
        if blank.any():
            raise DataParseError(f"missing {column}", row=int(frame.loc[blank, 'row'].iloc[0]))

    if severity_order is None:
        raise DataValidationError("A severity order of population labels is required to load a CSV")
    order = [str(label) for label in severity_order]
    unknown = ~frame['population'].isin(order)
    if unknown.any():
        first = frame.loc[unknown].iloc[0]
        raise DataParseError(f"unknown population label {first['population']!r} (expected one of {order})",
                             row=int(first['row']))
    parsed = []
    for value, row in zip(frame['value'], frame['row']):
        try:
            number = float(value)
        except ValueError:
            raise DataParseError(f"non-numeric value {value!r}", row=int(row))
        if not math.isfinite(number):
            raise DataParseError(f"non-finite value {value!r}", row=int(row))
        parsed.append(number)
    frame['value'] = parsed

    duplicated = frame.duplicated(subset=['patient', 'response'], keep='first')
    if duplicated.any():
        first = frame.loc[duplicated].iloc[0]
        raise DataParseError(f"duplicate measurement for patient {first['patient']!r} "
                             f"and response {first['response']!r}", row=int(first['row']))
    populations = frame.groupby('patient')['population'].nunique()
    if (populations > 1).any():
        patient = populations[populations > 1].index[0]
        raise DataValidationError(f"Patient {patient!r} appears in more than one population")

    responses = list(response_order) if response_order else sorted(frame['response'].unique())
    extra = set(frame['response']) - set(responses)
    if extra:
        raise DataValidationError(f"Responses {sorted(extra)} are not in the declared response order")
    wide = frame.pivot(index='patient', columns='response', values='value')
    wide = wide.reindex(columns=responses)
    incomplete = wide.isna().any(axis=1)
    if incomplete.any():
        patient = wide.index[incomplete][0]
        absent = [r for r in responses if pd.isna(wide.loc[patient, r])]
        raise DataValidationError(f"Patient {patient!r} is missing response(s) {absent}")

    population_of = frame.groupby('patient')['population'].first()
    values, patient_ids = [], []
    for label in order:
        ids = sorted(population_of.index[population_of == label])
        if not ids:
            raise DataValidationError(f"Population {label!r} has no patients")
        values.append(wide.loc[ids].to_numpy(dtype=float))
        patient_ids.append(list(ids))
    logger.info(f"Loaded {path}: {len(population_of)} patients, {len(responses)} responses, "
                f"sizes {[len(ids) for ids in patient_ids]}")
    return Dataset(values, order, responses, patient_ids)


def to_long_frame(ds: Dataset, schema: Optional[Dict[str, Any]] = None) -> pd.DataFrame:
    cols = _schema(schema)
    rows = []
    for j, block in enumerate(ds.values):
        for i, patient in enumerate(ds.patient_ids[j]):
            for m, response in enumerate(ds.response_labels):
                rows.append((patient, ds.population_labels[j], response, float(block[i, m])))
    return pd.DataFrame(rows, columns=[cols['patient_col'], cols['population_col'],
                                       cols['response_col'], cols['value_col']])


def write_csv(ds: Dataset, path: str, schema: Optional[Dict[str, Any]] = None) -> None:
    """Write the long format read by ``load_csv`` (full float precision)."""
    buffer = io.StringIO()
    to_long_frame(ds, schema).to_csv(buffer, index=False, float_format='%.17g')
    atomic_write_text(path, buffer.getvalue())
    logger.info(f"Wrote {ds.N * ds.M} rows to {path}")
