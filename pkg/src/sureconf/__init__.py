"""Conformal prediction sets for linear Gaussian imaging problems, calibrated
either with ground truth or, self-supervised, with Stein's unbiased risk
estimate computed from the measurements alone."""

from .conformal import (CalibrationResult, PredictionSet, ScoreSample, calibrate, calibrate_loo,
                        contains, score, set_size_proxy)
from .estimators import (Estimator, polynomial_deblur_estimator, reconstruct, soft_threshold_denoiser,
                         wiener_estimator)
from .imaging import Image, generate_smooth_image, read_image, write_image, write_table
from .operators import (CirculantOperator, NoiseModel, add_noise, apply, apply_adjoint, condition_number,
                        gaussian_blur_operator, identity_operator)
from .rng import Rng
from .sure import DivergenceEstimate, SureValue, divergence_exact, divergence_hutchinson, sure

__version__ = "0.1.0"
