import json
import os

import pandas as pd
import pytest

from shdp import EXIT_IO, EXIT_VALIDATION, main
from shdp.services.checkpoint import read_records

FIT_ARGS = ['--severity-order', '1,2,3,4', '--iterations', '12', '--burn-in', '4']


@pytest.fixture
def dataset(tmp_path):
    path = str(tmp_path / 'data.csv')
    assert main(['simulate', '--seed', '3', '--sizes', '6,4,3,5', '--n-responses', '2', '-o', path]) == 0
    return path


def test_simulate_is_reproducible(tmp_path):
    first, second = str(tmp_path / 'a.csv'), str(tmp_path / 'b.csv')
    assert main(['simulate', '--dgp', 'dgp2', '--seed', '9', '-o', first]) == 0
    assert main(['simulate', '--dgp', 'dgp2', '--seed', '9', '-o', second]) == 0
    with open(first, encoding='utf-8') as a, open(second, encoding='utf-8') as b:
        assert a.read() == b.read()
    assert len(pd.read_csv(first)) == 100


def test_simulate_errors(tmp_path, capsys):
    assert main(['simulate', '--dgp', 'dgp9', '--seed', '1', '-o', str(tmp_path / 'x.csv')]) == EXIT_VALIDATION
    body = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert body['error'] == 'Validation Error'
    assert body['status'] == EXIT_VALIDATION
    assert main(['simulate', '-o', str(tmp_path / 'y.csv')]) == EXIT_VALIDATION


def test_fit_and_summarize(tmp_path, dataset):
    run_dir = str(tmp_path / 'run')
    code = main(['fit', '-i', dataset, '--seed', '5', '--chains', '2', '--workers', '1',
                 '--out-dir', run_dir] + FIT_ARGS)
    assert code == 0
    with open(os.path.join(run_dir, 'run.json'), encoding='utf-8') as handle:
        manifest = json.load(handle)
    assert manifest['status'] == 'complete'
    assert manifest['dataset']['responses'] == ['y1', 'y2']
    records = list(read_records(os.path.join(run_dir, 'chain_1.ndjson')))
    assert len(records) == 8 * 2
    assert not os.path.exists(os.path.join(run_dir, 'chain_1.ndjson.part'))

    assert main(['summarize', '--run-dir', run_dir]) == 0
    out = os.path.join(run_dir, 'summary')
    partitions = pd.read_csv(os.path.join(out, 'partitions.csv'), index_col=0)
    assert len(partitions) == 16
    assert partitions.index[-1] == 'entropy'
    assert list(partitions.columns) == ['y1', 'y2']
    assert partitions.iloc[:15].sum().tolist() == pytest.approx([1.0, 1.0], abs=1e-5)
    for name in ('ordered_partitions.csv', 'credible_intervals.csv', 'cluster_counts.csv', 'summary.json',
                 'coclust_y1.csv', 'coclust_y1.svg', 'coclust_y1_sorted.svg', 'density_y2.csv'):
        assert os.path.exists(os.path.join(out, name))
    intervals = pd.read_csv(os.path.join(out, 'credible_intervals.csv'))
    assert (intervals['lower'] <= intervals['upper']).all()


def test_fit_with_toml_config(tmp_path, dataset):
    config = tmp_path / 'model.toml'
    config.write_text('prior_mode = "uniform"\nseverity_order = ["1", "2", "3", "4"]\n'
                      '[mcmc]\niterations = 6\nburn_in = 2\n', encoding='utf-8')
    run_dir = str(tmp_path / 'run')
    assert main(['fit', '-i', dataset, '--seed', '1', '--config', str(config), '--out-dir', run_dir]) == 0
    with open(os.path.join(run_dir, 'run.json'), encoding='utf-8') as handle:
        manifest = json.load(handle)
    assert manifest['config']['prior_mode'] == 'uniform'
    assert manifest['mcmc']['iterations'] == 6


def test_fit_is_reproducible_and_resumable(tmp_path, dataset):
    first, second = str(tmp_path / 'first'), str(tmp_path / 'second')
    for out in (first, second):
        assert main(['fit', '-i', dataset, '--seed', '7', '--out-dir', out] + FIT_ARGS) == 0
    streams = [list(read_records(os.path.join(d, 'chain_0.ndjson'))) for d in (first, second)]
    assert streams[0] == streams[1]
    # resuming a finished run keeps the stream as it is
    assert main(['fit', '-i', dataset, '--seed', '7', '--out-dir', first, '--resume'] + FIT_ARGS) == 0
    assert list(read_records(os.path.join(first, 'chain_0.ndjson'))) == streams[0]


def test_fit_rejects_bad_input(tmp_path, dataset):
    assert main(['fit', '-i', dataset, '--seed', '1', '--out-dir', str(tmp_path / 'r'),
                 '--severity-order', '1,2,3,4', '--iterations', '5', '--burn-in', '5']) == EXIT_VALIDATION
    assert main(['fit', '-i', dataset, '--seed', '1', '--out-dir', str(tmp_path / 'r'),
                 '--iterations', '5', '--burn-in', '1']) == EXIT_VALIDATION
    bad = tmp_path / 'bad.json'
    bad.write_text('{"prior_mode": "sideways"}', encoding='utf-8')
    assert main(['fit', '-i', dataset, '--seed', '1', '--config', str(bad), '--out-dir', str(tmp_path / 'r')]
                + FIT_ARGS) == EXIT_VALIDATION


def test_summarize_without_run(tmp_path):
    assert main(['summarize', '--run-dir', str(tmp_path / 'missing')]) == EXIT_IO


def test_validate_quick(capsys):
    assert main(['validate', '--quick', '--only', 'sir_weight', '--only', 'tie_weights']) == 0
    report = json.loads(capsys.readouterr().out)
    assert report['success'] is True
    assert [c['name'] for c in report['data']['checks']] == ['tie_weights', 'sir_weight']
    assert all(c['status'] == 'PASS' for c in report['data']['checks'])


def test_validate_reports_injected_fault(capsys, tmp_path):
    output = str(tmp_path / 'report.json')
    code = main(['validate', '--quick', '--only', 'sir_weight', '--inject-fault', 'sir_weight', '-o', output])
    assert code != 0
    report = json.loads(capsys.readouterr().out)
    assert report['success'] is False
    assert report['data']['checks'][0]['status'] == 'FAIL'
    with open(output, encoding='utf-8') as handle:
        assert json.load(handle)['success'] is False


def test_validate_skips_missing_real_data(capsys, tmp_path):
    assert main(['validate', '--only', 'real_dataset', '--real-data', str(tmp_path / 'none.csv')]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report['data']['checks'][0]['status'] == 'SKIP'
