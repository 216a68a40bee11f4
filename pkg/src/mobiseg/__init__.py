"""mobiseg: mobility-based segregation analytics.

Detect flow-dense communities, score census block groups by segregation and
bridging potential, train per-group flow models over environmental features,
attribute their predictions with Shapley values, and evaluate what-if POI
interventions with segregation feedback.
"""

from .community import DetectionConfig, Partition, detect_communities, directed_modularity
from .data import (
    CbgRecord,
    CityDataset,
    GroupSchema,
    MobilityGraph,
    ProportionMatrix,
    centroid_distance,
    group_proportions,
    load_city_dataset,
)
from .evalmetrics import MetricReport, cpc, decile_report, jsd, pearson, rmse_nrmse
from .explain import BackgroundSet, ShapReport, aggregate_shap, kmeans_background, shapley_values
from .features import FeatureSchema, VisitorMixTable, build_feature_vector, build_schema
from .models import (
    FlowPredictor,
    GravityModel,
    GroupModelSet,
    TrainConfig,
    evaluate_variants,
    segment_flows_by_group,
    train,
)
from .segregation import (
    CbgScore,
    VisitorMix,
    bridging_index,
    score_cbgs,
    segregation_index,
    topsis_rank,
    visitor_mix,
)
from .synth import SynthConfig, generate_city, oracle_exact_shapley, oracle_modularity_optimum
from .whatif import Intervention, ScenarioResult, StrategyStore, apply_intervention

__version__ = "0.1.0"
