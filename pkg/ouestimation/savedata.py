"""
Save result containers to an HDF5 file.
"""

import os
from typing import Iterable
import h5py

PREFIX = " SAVE:"


def to_file(containers: Iterable, filepath: str, overwrite: bool = False) -> bool:
    """
    Save results to an HDF5 file.

    Args:
        containers: Objects with a method 'append_to_file(h5file)'. Examples
            are runconfig.RunConfig, simulator.SimResult and
            experiments.SweepResult. Each container decides what to save.
        filepath: Full path of the file. Missing directories are created.
        overwrite: Replace an existing file.

    Returns:
        True if every container was saved. Containers that raise
        UserWarning (nothing to save) are reported and skipped.

    Raises:
        FileExistsError: If the file exists and overwrite is False.
    """
    if os.path.exists(filepath) and not overwrite:
        raise FileExistsError(f'File exists: {filepath} (use overwrite)')
    dirname = os.path.dirname(filepath)
    if dirname:
        os.makedirs(dirname, exist_ok=True)

    success = True
    with h5py.File(filepath, 'w') as h5file:
        for container in containers:
            try:
                container.append_to_file(h5file)
            except UserWarning as uwarn:
                success = False
                print(f'{PREFIX} {uwarn}')
    print(f'{PREFIX} Saved data to {filepath}')
    return success
