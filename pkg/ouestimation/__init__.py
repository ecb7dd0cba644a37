"""
Optimal sampling, quantization and coding for timely estimation of an
Ornstein-Uhlenbeck process over a noisy channel.
"""

__version__ = '0.1'
