"""
Utility functions and error types shared across ouestimation modules.
"""

import h5py
import numpy as np
from typing import Dict, Any, Optional
from bidict import bidict

# Numeric code stored in HDF5 files for each coding scheme
SCHEME_LABELS = bidict({'IIR': 0, 'FR': 1})

CSV_FLOAT_FORMAT = '%.12g'  # 12 significant digits


class SolverError(RuntimeError):
    """Failure of a numerical solver (bisection, inversion, series)."""


class BracketError(SolverError):
    """
    The Dinkelbach auxiliary does not change sign over the requested bracket.

    Attributes:
        bounds: (low, high) lambda values that were tested.
        values: Auxiliary values evaluated at both endpoints.
    """
    def __init__(self, bounds, values):
        self.bounds = tuple(bounds)
        self.values = tuple(values)
        super().__init__(f'Invalid bracket [{bounds[0]:.12g}, {bounds[1]:.12g}]: '
                         f'p(low)={values[0]:.6g}, p(high)={values[1]:.6g} '
                         '(need p(low) >= 0 >= p(high))')


class NonInvertibleLevelError(SolverError):
    """
    The requested level is not reached by an increasing but bounded map.

    Attributes:
        level: Requested level.
        supremum: Least upper bound of the map.
    """
    def __init__(self, level, supremum):
        self.level = level
        self.supremum = supremum
        super().__init__(f'Level {level:.12g} is not attainable: '
                         f'the expected penalty is bounded by {supremum:.12g}')


class ConvergenceError(SolverError):
    """An iteration or series cap was reached before the requested tolerance."""


class NonMonotoneAckError(ValueError):
    """
    Decoding-success probabilities decrease between two consecutive IR steps.

    Attributes:
        index: First j with p_j < p_{j-1}.
        values: (p_{j-1}, p_j).
    """
    def __init__(self, index, values):
        self.index = index
        self.values = tuple(values)
        super().__init__(f'p_j is not monotone at j={index}: '
                         f'p_{index-1}={values[0]:.15g} > p_{index}={values[1]:.15g}')


class ConfigError(ValueError):
    """
    Invalid field in a run configuration.

    Attributes:
        path: Dotted path to the offending field (e.g. 'CODING.epsilon').
    """
    def __init__(self, path, message):
        self.path = path
        super().__init__(f'{path}: {message}')


def format_number(value) -> str:
    """Serialize a number with 12 significant digits (integers unchanged)."""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return CSV_FLOAT_FORMAT % value


def append_dict_to_hdf5(h5_file_group: h5py.Group,
                        dict_name: str,
                        dict_data: dict,  # Accept both dict and bidict
                        compression: Optional[str] = None
                        ) -> h5py.Group:
    """
    Append a Python dictionary or bidict to a location/group in an HDF5 file.

    Creates one dataset for each key in the dictionary. Values that are None
    are skipped, strings (and lists of strings) are stored as variable-length
    strings.

    Args:
        h5_file_group: Open HDF5 group object where the dictionary will be stored.
        dict_name: Name for the new group that will contain the dictionary.
        dict_data: Dictionary or bidict to store (values must be scalars or flat lists).
        compression: Optional compression method for datasets.

    Returns:
        The created HDF5 group containing the dictionary.

    Raises:
        TypeError: If dict_data is not a dictionary or bidict.
        ValueError: If a value cannot be stored in HDF5.
    """
    if not isinstance(dict_data, (dict, bidict)):
        raise TypeError(f"dict_data must be a dictionary or bidict, got {type(dict_data)}")

    dict_group = h5_file_group.create_group(dict_name)
    for key, val in dict_data.items():
        if val is None:
            continue
        try:
            if isinstance(val, str) or (isinstance(val, (list, tuple)) and val
                                        and all(isinstance(item, str) for item in val)):
                dict_group.create_dataset(key, data=val, dtype=h5py.string_dtype())
            else:
                dict_group.create_dataset(key, data=val, compression=compression)
        except (TypeError, ValueError) as e:
            raise ValueError(f"Cannot store value for key '{key}': {e}")
    return dict_group


def dict_from_hdf5(dict_group: h5py.Group) -> Dict[str, Any]:
    """
    Convert an HDF5 group back to a Python dictionary.

    Args:
        dict_group: HDF5 group object containing the dictionary data.

    Returns:
        Reconstructed dictionary with native Python values.
    """
    new_dict = {}
    for key, val in dict_group.items():
        if h5py.check_string_dtype(val.dtype) is not None:
            value = val.asstr()[()]
        else:
            value = val[()]
        if isinstance(value, np.ndarray):
            value = value.tolist()
        elif hasattr(value, 'item'):
            value = value.item()
        new_dict[key] = value
    return new_dict


class ResultsFile:
    """
    Load results saved by ouestimation.savedata.

    Attributes:
        filename (str): Full path to the HDF5 data file.
        records (dict): Sweep records from '/sweep/records' (one array per column).
        argmins (dict): Per-setting optima from '/sweep/argmins'.
        simulation (dict): Summary of a simulation run from '/simulation/summary'.
        trace (dict): Per-epoch trace from '/simulation/trace' (if saved).
        config (dict): Run configuration sections from '/config' (if saved).
        labels (bidict): Scheme label mapping stored with the results.

    Example:
        >>> rdata = ResultsFile('/tmp/ouestimation/table1.h5')
        >>> print(rdata.records['lambda_star'])
    """

    def __init__(self, filename: str):
        """
        Args:
            filename (str): Full path to the HDF5 data file.

        Raises:
            FileNotFoundError: If the file does not exist.
            IOError: If the file cannot be opened or read.
        """
        self.filename = filename
        self.records = {}
        self.argmins = {}
        self.simulation = {}
        self.trace = {}
        self.config = {}
        self.labels = bidict()

        try:
            with h5py.File(self.filename, 'r') as h5file:
                self._load_all(h5file)
        except FileNotFoundError:
            raise FileNotFoundError(f'File does not exist: {self.filename}')
        except IOError as e:
            raise IOError(f'Error opening or reading file {self.filename}: {e}')

    def _load_all(self, h5file: h5py.File) -> None:
        if 'sweep' in h5file:
            self.records = self._load_columns(h5file['sweep'], 'records')
            self.argmins = self._load_columns(h5file['sweep'], 'argmins')
            if 'schemeLabels' in h5file['sweep']:
                self.labels = bidict(dict_from_hdf5(h5file['sweep']['schemeLabels']))
        if 'simulation' in h5file:
            if 'summary' in h5file['simulation']:
                self.simulation = dict_from_hdf5(h5file['simulation']['summary'])
            self.trace = self._load_columns(h5file['simulation'], 'trace')
        if 'config' in h5file:
            self.config = {name: dict_from_hdf5(group) for name, group in h5file['config'].items()}

    @staticmethod
    def _load_columns(group: h5py.Group, name: str) -> Dict[str, np.ndarray]:
        if name not in group:
            return {}
        columns = {}
        for varname, varvalue in group[name].items():
            if h5py.check_string_dtype(varvalue.dtype) is not None:
                values = varvalue.asstr()[...]
            else:
                values = varvalue[...]
            columns[varname] = values
        return columns

    def __repr__(self) -> str:
        info_lines = [f"ResultsFile('{self.filename}')"]
        if self.records:
            n_points = len(next(iter(self.records.values())))
            info_lines.append(f"  Sweep records: {n_points} grid points")
        if self.argmins:
            n_settings = len(next(iter(self.argmins.values())))
            info_lines.append(f"  Argmins: {n_settings} settings")
        if self.simulation:
            info_lines.append(f"  Simulation: avg_penalty={self.simulation.get('avg_penalty')}")
        if self.trace:
            n_epochs = len(next(iter(self.trace.values())))
            info_lines.append(f"  Trace: {n_epochs} epochs")
        return '\n'.join(info_lines)
