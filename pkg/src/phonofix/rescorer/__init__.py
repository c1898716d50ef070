from .features import (
    COMPONENT_THRESHOLD,
    GROUPS,
    ChannelAcousticCost,
    FeatureContext,
    extract_features,
    feature_group,
    transform,
    zscores,
)
from .model import (
    FeatureVector,
    RescorerModel,
    SchemaError,
    TrainConfig,
    TrainingError,
    TrainingExample,
    best_index,
    mwer_loss,
    rescore,
    score,
    train_mwer,
)
