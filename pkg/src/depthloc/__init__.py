"""depthloc: depth-vs-locality workbench for deep ReLU networks.

Exact infinite-width NTK computation, finite-width SGD training, and
synthetic local/global target functions, with reproducible sweep machinery.
"""

__version__ = "0.1.0"

from .numerics import RngStream, gaussian_vector, spd_solve
from .targets import (Dataset, GFunction, TargetSpec, estimate_g_mean,
                      global_eval, local_eval, make_dataset, monomial)
from .network import (Architecture, MlpModel, TrainCaps, TrainReport,
                      backward, forward, init_model, loss, predict,
                      predict_sign, sgd_train, width_for_depth)
from .ntk import (KernelSpec, NtkModel, gram, gram_cross, mc_ntk_estimate,
                  mc_ntk_estimate_pairs, ntk_fit, ntk_kernel,
                  ntk_kernel_bias_free, ntk_predict, sigma_recursion)
from .experiment import (AllDiverged, LrGrid, RunRecord, SweepConfig,
                         depth_sweep, kfold_split, lr_search, lr_sweep,
                         misclassification_rate, test_error)
