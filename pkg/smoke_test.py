#!/usr/bin/env python3

import json
import os
import tempfile

import pandas as pd

from shdp import main as shdp_main

WORK_DIR = tempfile.mkdtemp(prefix='shdp-smoke-')
DATA = os.path.join(WORK_DIR, 'data.csv')
RUN_DIR = os.path.join(WORK_DIR, 'run')


def smoke_simulate():
    print("🔍 Testing Simulation...")
    try:
        code = shdp_main(['simulate', '--dgp', 'main', '--seed', '1', '--sizes', '20,10,8,12', '-o', DATA])
        rows = len(pd.read_csv(DATA))
        print(f"✅ Simulate: exit {code}, {rows} rows")
        return code == 0 and rows == 50
    except Exception as e:
        print(f"❌ Simulate Failed: {e}")
        return False


def smoke_fit():
    print("\n🔍 Testing Fit (2 chains)...")
    try:
        code = shdp_main(['fit', '-i', DATA, '--seed', '11', '--chains', '2', '--iterations', '200',
                          '--burn-in', '100', '--severity-order', '1,2,3,4', '--out-dir', RUN_DIR])
        with open(os.path.join(RUN_DIR, 'run.json'), encoding='utf-8') as handle:
            manifest = json.load(handle)
        print(f"✅ Fit: exit {code}, status {manifest['status']}")
        for result in manifest.get('results', []):
            print(f"   Chain {result['chain']}: {result['emitted_this_run']} samples in {result['stream']}")
        return code == 0 and manifest['status'] == 'complete'
    except Exception as e:
        print(f"❌ Fit Failed: {e}")
        return False


def smoke_summarize():
    print("\n🔍 Testing Summaries...")
    try:
        code = shdp_main(['summarize', '--run-dir', RUN_DIR])
        table = pd.read_csv(os.path.join(RUN_DIR, 'summary', 'partitions.csv'), index_col=0)
        column = table['y1'].drop('entropy')
        print(f"✅ Summarize: exit {code}")
        print(f"   MAP partition: {column.idxmax()} ({column.max():.3f})")
        print(f"   Entropy: {table.loc['entropy', 'y1']:.3f}")
        return code == 0 and len(table) == 16
    except Exception as e:
        print(f"❌ Summarize Failed: {e}")
        return False


def smoke_validate():
    print("\n🔍 Testing Validation (quick)...")
    try:
        code = shdp_main(['validate', '--quick', '--only', 'restricted_normalizer', '--only', 'tie_weights',
                          '--only', 'sir_weight', '-o', os.path.join(WORK_DIR, 'validation.json')])
        print(f"✅ Validate: exit {code}")
        return code == 0
    except Exception as e:
        print(f"❌ Validate Failed: {e}")
        return False


def main():
    print("🚀 Starting s-HDP Pipeline Smoke Tests")
    print(f"   Working directory: {WORK_DIR}")
    print("=" * 60)

    tests = [
        smoke_simulate,
        smoke_fit,
        smoke_summarize,
        smoke_validate,
    ]

    results = []
    for test in tests:
        results.append(test())

    print("\n" + "=" * 60)
    print(f"🎯 Test Results: {sum(results)}/{len(results)} passed")

    if all(results):
        print("🎉 All tests passed!")
    else:
        print("⚠️  Some tests failed. Check the logs above for details.")


if __name__ == "__main__":
    main()
