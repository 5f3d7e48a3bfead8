# -*- coding: utf-8 -*-

# Optimiser defaults. Adam with L2 weight decay, constant learning rate.

LEARNING_RATE = 0.001
WEIGHT_DECAY = 1e-4
ADAM_BETAS = (0.9, 0.999)
ADAM_EPSILON = 1e-8
BATCH_SIZE = 32

# Fixed-epoch protocol, no early stopping.

EPOCHS_TEACHER = 200
EPOCHS_STUDENT = 100

# Number of cross-validation folds.

FOLDS = 5

# Overrides applied by the ``ci`` profile so that a full cross-validation
# run on the synthetic set finishes in minutes on a laptop.

CI_PROFILE = {
    "epochs_teacher": 30,
    "epochs_student": 15,
    "batch_size": 8,
    "learning_rate": 0.005,
}

# Distillation. ALPHA, BETA and GAMMA weight the intra-graph, memory and
# region losses in the total objective.

KD_TEMPERATURE = 4.0
RELATION_TEMPERATURE = 0.1
ALPHA = 1.0
BETA = 0.1
GAMMA = 0.1
MEMORY_CAPACITY = 256

# Model shape defaults. The SSM channel count is always joints * GRAPH_OUT.

IN_FEATURES = 3
GRAPH_OUT = 8
STATE_DIM = 8
TEMPORAL_REGIONS = 4
CONV_KERNEL = 3
STATE_EPSILON = 1e-6

# Longest window of the chunked scan. Its carried scale may shrink by a
# factor STATE_EPSILON per step, and 1e-6 ** 16 is still a normal float.

MAX_SCAN_CHUNK = 16

# Epsilon of the L2 normalisation used for cosine similarities. Vectors
# with a smaller norm are treated as zero vectors.

NORMALIZE_EPSILON = 1e-12

# Data pipeline.

AUGMENT_SCALE = 1.03
STD_FLOOR = 1e-8
SYNTH_CLASSES = 2
SYNTH_PER_CLASS = 20
SYNTH_FRAMES = 32
SYNTH_JOINTS = 5

# Gradient checking. Above GRADCHECK_MAX_FULL scalars only
# GRADCHECK_SAMPLE_SIZE coordinates are perturbed. The relative error is
# always taken against max(|analytic|, |numeric|, GRADCHECK_FLOOR). Layer and
# model checks use a larger step and also accept a coordinate whose absolute
# error is below GRADCHECK_MODEL_ABS_TOLERANCE; state-space transition
# gradients there go down to 1e-10, below the reach of float64 central
# differences of an O(1) loss.

GRADCHECK_EPSILON = 1e-6
GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_SAMPLE_SIZE = 256
GRADCHECK_MAX_FULL = 1000
GRADCHECK_FLOOR = 1e-12
GRADCHECK_MODEL_EPSILON = 1e-5
GRADCHECK_MODEL_ABS_TOLERANCE = 1e-10

# Version of the checkpoint and report JSON documents.

FORMAT_VERSION = 1
