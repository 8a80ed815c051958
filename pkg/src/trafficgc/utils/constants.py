"""Forecaster constants and default configuration."""

# Units: lengths in miles, speeds in mph, time quanta in minutes
MINUTES_PER_HOUR = 60.0
DEFAULT_FREE_FLOW_MPH = 60.0
DEFAULT_DELTA_T_MIN = 5.0

# Graph convolution settings
DEFAULT_K_HOPS = 3
DEFAULT_M_STEPS = None  # None means m follows K

# Sequence settings
DEFAULT_SEQ_LEN = 10
DEFAULT_SPLIT = (0.7, 0.1, 0.2)  # train / validation / test, chronological

# RMSProp settings
DEFAULT_LEARNING_RATE = 1e-5
DEFAULT_ALPHA = 0.99
DEFAULT_EPSILON = 1e-8
DEFAULT_GRAD_CLIP = 5.0

# Training settings
DEFAULT_BATCH_SIZE = 10
DEFAULT_LAMBDA1 = 0.01
DEFAULT_LAMBDA2 = 0.01
DEFAULT_MAX_EPOCHS = 100
DEFAULT_PATIENCE = 10
DEFAULT_SEED = 0

# Evaluation settings
MAPE_EPSILON_MPH = 1.0
SPARSITY_THRESHOLD = 1e-3

# Gradient checking
GRADCHECK_STEP = 1e-5
GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_FLOOR = 1e-8

# Synthetic congestion generator
SYNTHETIC_EDGE_MILES = 1.0
SYNTHETIC_EVENT_RATE = 0.02  # expected events per node per step
SYNTHETIC_DROP_RANGE = (20.0, 45.0)  # mph removed by a fresh event
SYNTHETIC_RECOVERY = 0.7  # share of a node's deficit kept next step
SYNTHETIC_SPREAD = 0.25  # share of the downstream deficit passed upstream
SYNTHETIC_NOISE_MPH = 1.0
SYNTHETIC_START = "2015-01-01T00:00:00"
SYNTHETIC_MIN_STEPS = 100
SYNTHETIC_MIN_NODES = 3

# Missing-value policies
IMPUTE_FFILL_BFILL = "ffill-bfill"
IMPUTE_NODE_MEAN = "node-mean"
IMPUTE_POLICIES = (IMPUTE_FFILL_BFILL, IMPUTE_NODE_MEAN)

# Synthetic topologies
TOPOLOGY_RING = "ring"
TOPOLOGY_PATH = "path"
TOPOLOGY_GRID = "grid"
TOPOLOGIES = (TOPOLOGY_RING, TOPOLOGY_PATH, TOPOLOGY_GRID)

# Checkpoint container
CHECKPOINT_FORMAT = "trafficgc-checkpoint"
CHECKPOINT_VERSION = 1

# File names written by the command-line tools
TOPOLOGY_FILE = "topology.csv"
NODE_ID_FILE = "node_ids.txt"
SPEED_FILE = "speeds.csv"
SPEED_LIMIT_FILE = "speed_limits.csv"
ADJACENCY_FILE = "adjacency.csv"
DISTANCE_FILE = "distance.csv"
FFR_FILE = "ffr.csv"
KHOP_FILE = "khop_{k}.csv"
MASK_FILE = "mask_{k}.csv"
REPORT_FILE = "train_report.csv"
METRICS_FILE = "metrics.csv"
AVG_WEIGHT_FILE = "avg_weights.csv"
CHECKPOINT_FILE = "model.npz"
PREDICTIONS_FILE = "predictions_{node}.csv"
SWEEP_FILE = "sweep_k.csv"
SWEEP_REPORT_FILE = "train_report_k{k}.csv"
