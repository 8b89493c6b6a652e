from .actors import (  # noqa: F401
    Decision,
    EpisodeConfig,
    EpisodeResult,
    EpisodeState,
    GreedyActor,
    PolicyActor,
    StageHeads,
    StageMasks,
    epsilon_phys,
    policy_decide,
    run_episode,
    sample_action,
)
from .masks import GraphArrays, MaskConfig, e1_mask, e2_mask, mode_mask  # noqa: F401
from .model import (  # noqa: F401
    ArchMeta,
    GraphBatch,
    PolicyNet,
    encode_graph,
    load_checkpoint,
    node_features,
    policy_heads,
    save_checkpoint,
    value_of,
)
