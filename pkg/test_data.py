import numpy as np
import pytest

from shdp.errors import ArgumentError, DataParseError, DataValidationError
from shdp.services.data import (
    DEFAULT_SIZES,
    DGPS,
    dgp_moments,
    destandardize,
    load_csv,
    simulate,
    standardize,
    write_csv,
)

ORDER = ['1', '2', '3', '4']
HEADER = 'patient,population,response,value\n'


def write(path, body):
    path.write_text(HEADER + body, encoding='utf-8')
    return str(path)


def test_simulate_shapes_and_determinism():
    for dgp in DGPS:
        ds = simulate(dgp, seed=5)
        assert ds.sizes == list(DEFAULT_SIZES)
        assert ds.M == 1
        assert ds.equals(simulate(dgp, seed=5))
    assert not simulate('main', seed=5).equals(simulate('main', seed=6))
    two = simulate('main', [3, 3, 3, 3], seed=1, n_responses=2)
    assert two.M == 2 and two.response_labels == ['y1', 'y2']


def test_simulate_rejects_bad_input():
    with pytest.raises(ArgumentError):
        simulate('nope', seed=1)
    with pytest.raises(ArgumentError):
        simulate('main', [5, 5], seed=1)
    with pytest.raises(ArgumentError):
        simulate('main', [5, 0, 5, 5], seed=1)


def test_outlier_is_planted():
    ds = simulate('dgp1', seed=3)
    assert ds.metadata['components'][0][-1, 0] == -1
    means, _ = dgp_moments('dgp1')
    assert means[0] == pytest.approx(4.0 / 50)


def test_simulated_means_match_moments():
    sizes = [4000, 4000, 4000, 4000]
    for dgp in ('main', 'dgp3', 'dgp5'):
        ds = simulate(dgp, sizes, seed=11)
        means, variances = dgp_moments(dgp, sizes)
        for j in range(4):
            se = np.sqrt(variances[j] / sizes[j])
            assert abs(ds.values[j][:, 0].mean() - means[j]) <= 4 * se


def test_csv_round_trip(tmp_path):
    ds = simulate('main', [12, 3, 4, 5], seed=2, n_responses=2)
    path = str(tmp_path / 'data.csv')
    write_csv(ds, path)
    loaded = load_csv(path, severity_order=ORDER)
    assert loaded.equals(ds)
    assert loaded.patient_ids == ds.patient_ids


def test_row_order_does_not_matter(tmp_path):
    rows = ['a,1,y,1.0', 'b,2,y,2.0', 'c,1,y,3.0', 'd,2,y,4.0']
    first = load_csv(write(tmp_path / 'a.csv', '\n'.join(rows) + '\n'), severity_order=['1', '2'])
    second = load_csv(write(tmp_path / 'b.csv', '\n'.join(reversed(rows)) + '\n'), severity_order=['1', '2'])
    assert first.equals(second)
    assert first.values[0][:, 0].tolist() == [1.0, 3.0]


def test_parse_errors_report_rows(tmp_path):
    cases = {
        'a,1,y,1.0\nb,1,y,oops\n': 3,
        'a,1,y,1.0\nb,9,y,2.0\n': 3,
        'a,1,y,1.0\na,1,y,2.0\n': 3,
        'a,1,y,\n': 2,
        'a,1,y,inf\n': 2,
    }
    for body, row in cases.items():
        with pytest.raises(DataParseError) as error:
            load_csv(write(tmp_path / 'bad.csv', body), severity_order=['1'])
        assert error.value.row == row


def test_dataset_errors(tmp_path):
    with pytest.raises(DataParseError):
        load_csv(write(tmp_path / 'empty.csv', ''), severity_order=['1'])
    with pytest.raises(DataValidationError):
        load_csv(write(tmp_path / 'missing.csv', 'a,1,y,1.0\na,1,z,2.0\nb,2,y,1.0\n'), severity_order=['1', '2'])
    with pytest.raises(DataValidationError):
        load_csv(write(tmp_path / 'nopop.csv', 'a,1,y,1.0\n'), severity_order=['1', '2'])
    with pytest.raises(DataValidationError):
        load_csv(write(tmp_path / 'two.csv', 'a,1,y,1.0\na,2,z,1.0\n'), severity_order=['1', '2'])
    with pytest.raises(DataValidationError):
        load_csv(write(tmp_path / 'order.csv', 'a,1,y,1.0\n'))


def test_standardization():
    ds = simulate('main', [10, 10, 10, 10], seed=4, n_responses=2)
    work = standardize(ds)
    for m in range(2):
        pooled = work.pooled(m)
        assert pooled.mean() == pytest.approx(0.0, abs=1e-12)
        assert pooled.std() == pytest.approx(1.0)
    back = destandardize(work)
    assert back.equals(ds, atol=1e-12)
    again = standardize(work)
    assert again.standardization.is_identity()


def test_zero_spread_cannot_be_standardized(tmp_path):
    ds = load_csv(write(tmp_path / 'flat.csv', 'a,1,y,2.0\nb,2,y,2.0\n'), severity_order=['1', '2'])
    with pytest.raises(DataValidationError):
        standardize(ds)
