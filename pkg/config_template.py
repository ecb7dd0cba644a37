"""
Configuration file for ouestimation runs.

Copy this file to config.py (next to the ouestimation package, or anywhere
and pass it with --config). Any setting left out keeps its default.
"""

# Ornstein-Uhlenbeck process: dX = -theta X dt + sigma dW
OU = {
    'theta': 0.5,   # 1/time units
    'sigma': 1.0,
}

# Quantization and channel coding for 'solve' and 'simulate'
CODING = {
    'ell': 2,         # message (quantization) bits
    'n': 4,           # codeword bits, n >= ell
    't_b': 0.05,      # time units per bit
    'beta': 0.15,     # receiver processing time per decoding attempt
    'epsilon': 0.1,   # BSC crossover probability, in (0, 0.5)
}

SCHEME = 'IIR'  # Options: 'IIR', 'FR'

SOLVER = {
    'tol': 1e-9,          # bisection tolerance on the average MMSE
    'tail_tol': 1e-12,    # IIR delay pmf truncation
    'method': 'auto',     # Options: 'auto', 'closed_form', 'numeric'
    'pipelined': True,    # FR attempts just in time (False: spaced n_bar apart)
}

SIMULATION = {
    'num_epochs': 100000,
    'seed': 0,
    'warmup_epochs': None,   # None discards 1% of num_epochs
    'batches': 100,
    'keep_trace': False,
    'replications': 1,
}

# Grid for 'sweep' without a preset: one grid per theta
SWEEP = {
    'thetas': [0.01, 0.5],
    'epsilons': [0.1, 0.4],
    'ell_min': 1,
    'ell_max': 8,
    'n_extra': 24,       # n runs up to ell + n_extra
    't_b': 0.05,
    'betas': [0.15],
    'schemes': ['IIR', 'FR'],
    'n_values': None,    # fixed list of n instead of the ell-relative range
    'min_redundancy': 0, # smallest n - ell (2: codes correct one bit error)
    'workers': None,     # None uses all cores
}

OUTPUT_DIR = '/tmp/ouestimation/'
