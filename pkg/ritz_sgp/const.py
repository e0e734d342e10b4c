"""Constants"""

# Steplength safeguards
DEFAULT_ALPHA_MIN = 1e-10
DEFAULT_ALPHA_MAX = 1e5
DEFAULT_ALPHA0 = 1.0

# Diagonal scaling clamp [l1, l2]
DEFAULT_SCALING_L1 = 1e-5
DEFAULT_SCALING_L2 = 1e5
# Floor on V before the split-rule division
SPLIT_DENOMINATOR_FLOOR = 1e-12

# Ritz sweep
DEFAULT_SWEEP_LENGTH = 3
# Relative Cholesky pivot below which G~'G~ counts as rank deficient
RANK_TOLERANCE = 1e-12

# ABBmin1
DEFAULT_ABB_TAU0 = 0.5
DEFAULT_ABB_TAU_DECREASE = 0.9
DEFAULT_ABB_TAU_INCREASE = 1.1
DEFAULT_ABB_HISTORY = 3
DEFAULT_BB2_WARMUP = 20

# Armijo linesearch
DEFAULT_LS_MEMORY = 1
DEFAULT_LS_GAMMA = 1e-4
DEFAULT_LS_SIGMA = 0.5
DEFAULT_LS_MAX_BACKTRACKS = 40

# KL domain guard
KL_MODEL_FLOOR = 1e-300

# Disc mask threshold, relative to 1 + |grad|_inf
DEFAULT_DISC_MASK_EPS = 1e-8

# Chambolle fixed step
DEFAULT_CHAMBOLLE_TAU = 0.24
CHAMBOLLE_TAU_LIMIT = 0.25

# Stopping
DEFAULT_MAX_ITERS = 5000
DEFAULT_THRESHOLDS = (1e-4, 1e-6, 1e-8)

# Problem defaults
DEFAULT_PSF_SIGMA = 1.3
DEFAULT_HS_BETA = 0.0045
DEFAULT_HS_DELTA = 0.1
DEFAULT_ROF_BETA = 20.0
DEFAULT_GAUSSIAN_VARIANCE = 1.0
DEFAULT_POISSON_BACKGROUND = 100.0
DEFAULT_IMAGE_SIZE = 64
DEFAULT_QP_SIZE = 20
DEFAULT_QP_ACTIVE = 8
# Lower bound of the constant starting image
DEFAULT_X0_FLOOR = 1e-3

# Reference optimum
DEFAULT_REFERENCE_ITERS = 100000
DEFAULT_REFERENCE_STAGNATION = 1e-14
DEFAULT_REFERENCE_WINDOW = 50

# Seconds a single solver run may take inside an experiment
DEFAULT_SOLVER_TIMEOUT = 600

# Problem kinds
PROBLEM_QP = "qp"
PROBLEM_LS_DEBLUR = "ls_deblur"
PROBLEM_KL_DEBLUR = "kl_deblur"
PROBLEM_KL_HS = "kl_hs"
PROBLEM_ROF = "rof"
PROBLEM_KINDS = [
    PROBLEM_QP,
    PROBLEM_LS_DEBLUR,
    PROBLEM_KL_DEBLUR,
    PROBLEM_KL_HS,
    PROBLEM_ROF,
]

# Noise kinds
NOISE_NONE = "none"
NOISE_GAUSSIAN = "gaussian"
NOISE_POISSON = "poisson"
NOISE_KINDS = [NOISE_NONE, NOISE_GAUSSIAN, NOISE_POISSON]

# QP spectra
SPECTRUM_GEOMETRIC = "geometric"
SPECTRUM_A1 = "A1"
SPECTRUM_A2 = "A2"
SPECTRUM_A3 = "A3"
SPECTRUM_COND = "cond"
SPECTRUM_KINDS = [
    SPECTRUM_GEOMETRIC,
    SPECTRUM_A1,
    SPECTRUM_A2,
    SPECTRUM_A3,
    SPECTRUM_COND,
]

# Scaling rules
SCALING_IDENTITY = "identity"
SCALING_PR = "PR"
SCALING_CL = "CL"
SCALING_XK = "XK"
SCALING_SPLIT = "split"
SCALING_RULES = [
    SCALING_IDENTITY,
    SCALING_PR,
    SCALING_CL,
    SCALING_XK,
    SCALING_SPLIT,
]

# Steplength rules
STEP_CONSTANT = "constant"
STEP_BB1 = "bb1"
STEP_BB2 = "bb2"
STEP_ABBMIN1 = "abbmin1"
STEP_RITZ = "ritz"
STEP_RULES = [STEP_CONSTANT, STEP_BB1, STEP_BB2, STEP_ABBMIN1, STEP_RITZ]

# Solver methods
METHOD_SGP = "sgp"
METHOD_GP_EXTRA = "gp_extra"
METHOD_ISRA = "isra"
METHOD_RL = "rl"
METHOD_CHAMBOLLE = "chambolle"
METHODS = [METHOD_SGP, METHOD_GP_EXTRA, METHOD_ISRA, METHOD_RL, METHOD_CHAMBOLLE]

# Phantoms
PHANTOM_OBJECT = "object"
PHANTOM_SHAPES = "shapes"
PHANTOMS = [PHANTOM_OBJECT, PHANTOM_SHAPES]

# Termination reasons
REASON_MAX_ITERS = "max_iters"
REASON_GAP = "gap"
REASON_RRE = "rre"
REASON_STEP = "step"
REASON_STAGNATION = "stagnation"
REASON_STATIONARY = "stationary"
REASON_DOMAIN = "domain_violation"
REASON_NOT_DESCENT = "not_descent"
REASON_LINESEARCH = "linesearch_exhausted"
REASON_FAILED = "failed"
REASON_TIMEOUT = "timeout"

# Configuration keys
CONF_PROBLEM = "problem"
CONF_KIND = "kind"
CONF_SIZE = "size"
CONF_SEED = "seed"
CONF_IMAGE = "image"
CONF_PSF = "psf"
CONF_PSF_SIGMA = "psf_sigma"
CONF_PHANTOM = "phantom"
CONF_SPECTRUM = "spectrum"
CONF_XI_MIN = "xi_min"
CONF_XI_MAX = "xi_max"
CONF_N_ACTIVE = "n_active"
CONF_NOISE = "noise"
CONF_VARIANCE = "variance"
CONF_BACKGROUND = "background"
CONF_REGULARIZATION = "regularization"
CONF_BETA = "beta"
CONF_DELTA = "delta"
CONF_SOLVERS = "solvers"
CONF_METHOD = "method"
CONF_SCALING = "scaling"
CONF_STEPLENGTH = "steplength"
CONF_MEMORY = "memory"
CONF_SWEEP = "sweep"
CONF_ALPHA_MIN = "alpha_min"
CONF_ALPHA_MAX = "alpha_max"
CONF_ALPHA0 = "alpha0"
CONF_L1 = "l1"
CONF_L2 = "l2"
CONF_TAU = "tau"
CONF_EPS = "eps"
CONF_LITERAL = "literal"
CONF_GAMMA_USES_LAMBDA = "gamma_uses_lambda"
CONF_STOP = "stop"
CONF_MAX_ITERS = "max_iters"
CONF_GAP_TOL = "gap_tol"
CONF_RRE_TOL = "rre_tol"
CONF_STEP_TOL = "step_tol"
CONF_THRESHOLDS = "thresholds"
CONF_REFERENCE = "reference"
CONF_STAGNATION = "stagnation"
CONF_TIMEOUT = "timeout"
CONF_OUTPUT = "output"

# Output files
TRACE_FILE_PATTERN = "trace_{name}.csv"
SUMMARY_FILE = "summary.csv"
TIMINGS_FILE = "timings.csv"
CACHE_DIR = "cache"
TRACE_COLUMNS = ["iter", "f", "alpha", "lambda", "rre", "gap", "time_s"]
ITERATE_FILE_PATTERN = "x_{name}.txt"
REFERENCE_FILE_PATTERN = "reference_{key}.yaml"
TRUTH_FILE = "truth.txt"
DATA_FILE = "data.txt"
PSF_FILE = "psf.txt"
DEFAULT_OUTPUT_DIR = "results"
