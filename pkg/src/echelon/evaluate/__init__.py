from .scoring import (LAYER_WEIGHTS, PRESETS, SCORE_METRICS, ScoreRow, ScoreWeights, layer_score,
                      mean_scores, normalize_global, ranking, score_table, total_score, weights_for)
from .stats import (AnovaResult, StatReport, TukeyPair, anova_f, betainc, q_critical, stat_report,
                    tukey_hsd, welch_t)

__all__ = [
    "LAYER_WEIGHTS", "PRESETS", "SCORE_METRICS", "ScoreRow", "ScoreWeights", "layer_score",
    "mean_scores", "normalize_global", "ranking", "score_table", "total_score", "weights_for",
    "AnovaResult", "StatReport", "TukeyPair", "anova_f", "betainc", "q_critical", "stat_report",
    "tukey_hsd", "welch_t",
]
