from dataclasses import dataclass, field
from typing import Dict, List, Optional
import numpy as np
import pandas as pd
from sklearn.linear_model import LinearRegression
from cognistream.config import FORECAST_DEFAULTS
from cognistream.exceptions import NotASlot, TooShort
from cognistream.helpers import forecast_method_checker, format_score, tsv_line
from cognistream.logger import get_logger
from cognistream.structures import instance_order
from cognistream._generalizer import Hierarchy, Slot, leaves_under

# extrapolated frequencies below this count as 0
CLIP_EPSILON = 1e-12


@dataclass
class ClassSequence:
    """
    Timestamp-ordered class labels of the leaf instances under a template

    Parameters
    ----------
    template_id : str
        The template whose leaves are classified

    class_position : int
        Slot position whose item is the class label

    labels : list[str]
        One label per leaf instance in timestamp order

    window_distributions : dict
        window_index -> {label: relative frequency}, ordered by window
    """
    template_id: str
    class_position: int
    labels: List[str] = field(default_factory=list)
    window_distributions: Dict[int, Dict[str, float]] = field(default_factory=dict)


@dataclass
class Forecast:
    method: str
    distribution: Dict[str, float]
    horizon: str


def classify(hierarchy: Hierarchy, template_id: str, class_position: int) -> ClassSequence:
    """
    Labels every leaf instance under a template by its item at a slot position

    Parameters
    ----------
    hierarchy : Hierarchy
        Hierarchy holding the template

    template_id : str
        node_id of the template

    class_position : int
        Position of a slot of the template

    Returns
    -------
    ClassSequence
        Labels and per-window relative frequencies
    """
    template = hierarchy.get(template_id)
    if (not isinstance(class_position, int) or not 0 <= class_position < template.arity
            or not isinstance(template.positions[class_position], Slot)):
        error_msg = f"Position {class_position} of template {template_id} is not a slot"
        get_logger(__name__, "PROD", False).error(error_msg)
        raise NotASlot(error_msg)

    instances = sorted(
        (instance for leaf in leaves_under(hierarchy, template_id) for instance in leaf.instances),
        key=instance_order
    )
    frame = pd.DataFrame({
        "window": [instance.timestamp for instance in instances],
        "label": [instance.items[class_position] for instance in instances]
    })

    distributions: Dict[int, Dict[str, float]] = {}
    if not frame.empty:
        frequencies = frame.groupby("window")["label"].value_counts(normalize=True)
        for (window, label), frequency in frequencies.sort_index().items():
            distributions.setdefault(int(window), {})[label] = float(frequency)

    return ClassSequence(template_id, class_position, frame["label"].tolist(), distributions)


def _too_short(error_msg: str):
    get_logger(__name__, "PROD", False).error(error_msg)
    raise TooShort(error_msg)


def markov_predict(sequence: ClassSequence, alpha: float = FORECAST_DEFAULTS["alpha"]) -> Forecast:
    """
    Next-step class distribution of a first order Markov chain fitted on the label sequence

    Parameters
    ----------
    sequence : ClassSequence
        At least 2 labels

    alpha : float, (default=1.0)
        Additive smoothing over the observed label alphabet

    Returns
    -------
    Forecast
        Distribution conditioned on the last label, labels with probability 0 are omitted
    """
    forecast_method_checker("markov", alpha)
    labels = sequence.labels
    if len(labels) < 2:
        _too_short(f"Markov forecasting needs at least 2 labels, got {len(labels)}")

    alphabet = sorted(set(labels))
    index = {label: i for i, label in enumerate(alphabet)}
    codes = np.array([index[label] for label in labels])

    transitions = np.zeros((len(alphabet), len(alphabet)))
    np.add.at(transitions, (codes[:-1], codes[1:]), 1)

    row = transitions[codes[-1]] + alpha
    if row.sum() == 0:
        # the last label was never left and there is no smoothing mass
        row = np.bincount(codes, minlength=len(alphabet)).astype(float)

    probabilities = row / row.sum()
    distribution = {label: float(probabilities[index[label]]) for label in alphabet if probabilities[index[label]] > 0}
    return Forecast("markov", distribution, "next-step")


def trend_predict(sequence: ClassSequence) -> Forecast:
    """
    Next-window class distribution from a least squares line per label

    Each label's relative frequency is regressed on the window index (absent labels count 0),
    extrapolated one window ahead, clipped at 0 and renormalized. If every extrapolation
    clips to 0 the last window's distribution is returned

    Parameters
    ----------
    sequence : ClassSequence
        At least 2 non-empty windows
    """
    windows = sorted(window for window, distribution in sequence.window_distributions.items() if distribution)
    if len(windows) < 2:
        _too_short(f"Trend forecasting needs at least 2 non-empty windows, got {len(windows)}")

    frame = pd.DataFrame(
        [sequence.window_distributions[window] for window in windows], index=windows
    ).fillna(0.0)
    frame = frame[sorted(frame.columns)]

    model = LinearRegression()
    model.fit(np.array(windows, dtype=float).reshape(-1, 1), frame.to_numpy())
    extrapolated = model.predict(np.array([[windows[-1] + 1.0]]))[0]
    extrapolated[extrapolated < CLIP_EPSILON] = 0.0

    if extrapolated.sum() == 0:
        last = sequence.window_distributions[windows[-1]]
        return Forecast("trend", dict(last), "next-window")

    probabilities = extrapolated / extrapolated.sum()
    distribution = {label: float(p) for label, p in zip(frame.columns, probabilities) if p > 0}
    return Forecast("trend", distribution, "next-window")


def predict(sequence: ClassSequence, method: Optional[str] = None, alpha: float = FORECAST_DEFAULTS["alpha"]) -> Forecast:
    method = forecast_method_checker(method or FORECAST_DEFAULTS["method"], alpha)
    return markov_predict(sequence, alpha) if method == "markov" else trend_predict(sequence)


def export_forecast(forecast: Forecast) -> List[str]:
    """
    label and probability lines, sorted by probability descending then label
    """
    ordered = sorted(forecast.distribution.items(), key=lambda pair: (-pair[1], pair[0]))
    return [tsv_line(label, format_score(probability)) for label, probability in ordered]
