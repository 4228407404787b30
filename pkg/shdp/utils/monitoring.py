"""Process resource metrics recorded in run manifests and validation reports."""

import os
import sys
from typing import Dict, Any

import psutil


def get_process_metrics() -> Dict[str, Any]:
    try:
        process = psutil.Process(os.getpid())
        memory = process.memory_info()
        cpu = process.cpu_times()

        return {
            'process': {
                'pid': process.pid,
                'memory_rss_mb': round(memory.rss / (1024**2), 2),
                'memory_vms_mb': round(memory.vms / (1024**2), 2),
                'cpu_user_s': round(cpu.user, 3),
                'cpu_system_s': round(cpu.system, 3),
                'threads': process.num_threads(),
            },
            'system': {
                'cpu_count': psutil.cpu_count(logical=True),
                'memory_available_gb': round(psutil.virtual_memory().available / (1024**3), 2),
            },
            'python': {
                'version': sys.version.split()[0],
                'platform': sys.platform,
            }
        }
    except Exception as e:
        return {'error': f'Failed to get process metrics: {str(e)}'}


def default_worker_count(requested: int) -> int:
    """Number of chain workers: the request capped by the logical CPU count."""
    available = psutil.cpu_count(logical=True) or 1
    return max(1, min(requested, available))
