"""Random Forest of Thoughts prompting for multi-turn questionnaire label prediction."""

from .forest import ForestConfig, Prediction, ThoughtForest, build_forest, predict
from .icot import CandidateThoughts, Thought, ThoughtLevel, run_icot
from .llm import Cassette, Completion, HTTPBackend, PromptRequest, ReplayBackend, ScriptedBackend
from .pipeline import RFoTConfig, rfot_predict
from .shapley import ImportanceVector, exact_shapley, mc_shapley, top_k
from .survey import Dataset, MentalStateLabel, QAPair, SurveyRecord, dataset_stats, load_dataset

__version__ = "0.1.0"
