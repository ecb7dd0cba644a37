"""
Compare the ideal rate-distortion model with Lloyd-Max codebooks.

Prints the relative distortion of each model and the optimal FR average
MMSE predicted with each one, for the default coding configuration.
"""

from ouestimation.penalty import OUParams
from ouestimation.channel import CodingConfig
from ouestimation.policyfr import fr_lambda_closed_form
from ouestimation.quantizer import lloyd_max_quantizer
from ouestimation.simulator import predicted_mse

ou = OUParams(theta=0.5, sigma=1.0)

print(" ell   ideal D   Lloyd-Max D   lambda*(ideal)   lambda*(Lloyd-Max)")
for ell in range(1, 7):
    cfg = CodingConfig(ell=ell, n=ell + 2, t_b=0.05, beta=0.15, epsilon=0.1)
    codebook = lloyd_max_quantizer(ou.variance, ell)
    lambda_star = fr_lambda_closed_form(ou, cfg)
    relative = codebook.distortion / ou.variance
    predicted = predicted_mse(ou.variance, ell, lambda_star, relative)
    print(f"{ell:4d}   {2.0**(-2 * ell):.5f}   {relative:.5f}       {lambda_star:.6f}         {predicted:.6f}")
