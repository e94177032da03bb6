__all__ = [
    'ALGOS', 'ENV_IDS', 'VARIANTS', 'REWARD_KINDS', 'ALPHA_MODES',
    'EXIT_CODES', 'CSV', 'DEFAULTS',
]


class Immutable(type):

    def __call__(*args):
        raise Exception("You can't create instance of immutable object")

    def __setattr__(*args):
        raise Exception("You can't modify immutable object")


class ALGOS(metaclass=Immutable):

    OE_WAC = 'oe-wac'
    ME_WAC = 'me-wac'
    SAC = 'sac'
    OAC = 'oac'

    ALL = (OE_WAC, ME_WAC, SAC, OAC)
    WAC = (OE_WAC, ME_WAC)


class ENV_IDS(metaclass=Immutable):

    LQG = 'lqg'
    RIVERSWIM = 'riverswim'
    POINT1 = 'point1'
    POINT2 = 'point2'
    POINT3 = 'point3'
    POINT4 = 'point4'

    POINTS = (POINT1, POINT2, POINT3, POINT4)
    ALL = (LQG, RIVERSWIM) + POINTS


class VARIANTS(metaclass=Immutable):

    # Optimistic estimator: the exploration policy is also the target policy.
    OE = 'OE'
    # Mean estimator: a separate greedy target policy on the mean critic.
    ME = 'ME'


class REWARD_KINDS(metaclass=Immutable):

    DENSE = 'dense'
    SPARSE = 'sparse'


class ALPHA_MODES(metaclass=Immutable):

    FIXED = 'fixed'
    AUTO = 'auto'


class EXIT_CODES(metaclass=Immutable):

    OK = 0
    RUN_FAILURE = 1
    CONFIG_ERROR = 2


class CSV(metaclass=Immutable):

    SCHEMA_VERSION = 1

    EPOCH_COLUMNS = (
        'epoch',
        'return_mean',
        'return_ci95',
        'episodes_completed',
        'coverage',
        'alpha',
        'sigma_visited_mean',
        'sigma_synthetic_mean',
        'critic_loss',
        'actor_loss',
    )
    # Columns that get mean/CI aggregation across seeds.
    MERGED_METRICS = EPOCH_COLUMNS[1:2] + EPOCH_COLUMNS[3:]
    # Normal-approximation 95% interval.
    CI_Z = 1.96


class DEFAULTS(metaclass=Immutable):

    # Shared actor-critic settings.
    HIDDEN_SIZES = (256, 256)
    BUFFER_CAPACITY = 1_000_000
    N_TRAIN = 1000
    N_EXPLORE = 1000
    BATCH_SIZE = 256
    LR = 1e-3
    GAMMA = 0.99
    TAU = 0.005

    # Optimistic actor-critic baseline.
    DELTA_OAC = 18.0
    BETA_UB = 6.5

    # Wasserstein actor-critic.
    DELTA = 0.95
    LAMBDA = 0.6
    RHO = 0.6

    EPOCHS = 100
    SEEDS = (0, 1, 2, 3, 4)
    EVAL_STEPS = 3000
    COVERAGE_EPSILON = 1e-4
    OUTPUT_ROOT_ENV = 'WAC_OUTPUT_ROOT'
