from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple
import pandas as pd
from cognistream.config import RELEVANCY_DEFAULTS
from cognistream.exceptions import WindowRegression, UnknownSubject, RelevancyError
from cognistream.helpers import relevancy_config_checker, format_score, tsv_line, read_lines
from cognistream.logger import get_logger

PROCESSED_WINDOW_HEADER = "# processed_window="


@dataclass(frozen=True)
class RelevancyConfig:
    """
    Parameters
    ----------
    decay : float, (default=0.5)
        Weight of the newest observation in the recurrence, in (0, 1]

    saturation : int, (default=4)
        Count per window that maps to a full observation

    budget : int, (default=8)
        Tasks selected per scheduling cycle
    """
    decay: float = RELEVANCY_DEFAULTS["decay"]
    saturation: int = RELEVANCY_DEFAULTS["saturation"]
    budget: int = RELEVANCY_DEFAULTS["budget"]

    def __post_init__(self):
        relevancy_config_checker(self.decay, self.saturation, self.budget)


@dataclass
class RelevanceScore:
    subject: str
    score: float = 0.0
    last_window: int = -1


class RelevancyTable:
    """
    Relevancy of patterns and templates, the probability of encountering them in the stream

    Every window folds the observed counts into an exponentially decaying score:
    score <- (1 - decay) * score + decay * min(1, count / saturation)
    Subjects absent from a window decay with count 0, query hits count as saturated observations

    Parameters
    ----------
    config : RelevancyConfig, optional
        Recurrence constants, defaults are used If None

    logging_to_file: bool, (default=False)
        If True, the logs will be saved to /logs/cognistream_logs.log as well
    """
    def __init__(self, config: Optional[RelevancyConfig] = None, logging_to_file: bool = False):
        self.config = config or RelevancyConfig()
        self.scores: Dict[str, RelevanceScore] = {}
        self.processed_window = -1
        self.__logger = get_logger(__name__, "PROD", logging_to_file)

    def __repr__(self):
        return f"RelevancyTable(subjects={len(self.scores)}, processed_window={self.processed_window})"

    def __contains__(self, subject: str) -> bool:
        return subject in self.scores

    def __len__(self) -> int:
        return len(self.scores)

    def score(self, subject: str) -> float:
        """
        Current score of a subject, 0 for subjects never seen
        """
        entry = self.scores.get(subject)
        return entry.score if entry is not None else 0.0

    def register(self, subjects: Iterable[str]):
        """
        Adds subjects with score 0 without advancing the window
        """
        for subject in subjects:
            self.scores.setdefault(subject, RelevanceScore(subject))

    def __observe(self, entry: RelevanceScore, observation: float):
        decay = self.config.decay
        entry.score = min(1.0, max(0.0, (1 - decay) * entry.score + decay * observation))

    def update_window(self, window_index: int, window_counts: Mapping[str, int]) -> "RelevancyTable":
        """
        Folds one window of subject counts into the scores

        Parameters
        ----------
        window_index : int
            Must be greater than every window folded in before

        window_counts : Mapping[str, int]
            subject -> occurrence count in the window, unknown subjects are registered at score 0 first

        Returns
        -------
        RelevancyTable
            self, updated in place
        """
        if window_index <= self.processed_window:
            error_msg = f"Window {window_index} was already processed, the table is at window {self.processed_window}"
            self.__logger.error(error_msg)
            raise WindowRegression(error_msg)

        self.register(window_counts)
        saturation = self.config.saturation

        for subject, entry in self.scores.items():
            count = window_counts.get(subject, 0)
            self.__observe(entry, min(1.0, count / saturation))
            if count > 0:
                entry.last_window = window_index

        self.processed_window = window_index
        return self

    def query_boost(self, subject: str) -> "RelevancyTable":
        """
        A query hit is a saturated observation of user demand for the subject
        """
        if subject not in self.scores:
            error_msg = f"Subject {subject} has no relevancy score to boost"
            self.__logger.error(error_msg)
            raise UnknownSubject(error_msg)

        self.__observe(self.scores[subject], 1.0)
        return self

    def schedule(self, tasks: Sequence[Tuple[Any, str]], budget: Optional[int] = None) -> List[Any]:
        """
        Selects the tasks whose subjects are the most relevant

        Parameters
        ----------
        tasks : Sequence[tuple]
            (task, subject) pairs

        budget : int, optional
            Number of tasks to select, config.budget is used If None

        Returns
        -------
        list
            Up to budget tasks ordered by subject score descending, ties keep the input order
        """
        budget = self.config.budget if budget is None else budget
        ranked = sorted(tasks, key=lambda pair: -self.score(pair[1]))
        return [task for task, _ in ranked[:budget]]

    def export_lines(self) -> List[str]:
        """
        Header with the processed window, then subject, score and last_window sorted by subject
        """
        lines = [f"{PROCESSED_WINDOW_HEADER}{self.processed_window}"]
        for subject in sorted(self.scores):
            entry = self.scores[subject]
            lines.append(tsv_line(subject, format_score(entry.score), entry.last_window))
        return lines

    def score_lines(self) -> List[str]:
        return self.export_lines()[1:]

    @classmethod
    def load(cls, path: str, config: Optional[RelevancyConfig] = None) -> "RelevancyTable":
        """
        Reopens a table written by export_lines(), a missing file gives an empty table
        """
        table = cls(config)
        try:
            with open(path, "r", encoding="utf-8", newline="\n") as file:
                header = file.readline().rstrip("\n")
        except FileNotFoundError:
            return table

        if header.startswith(PROCESSED_WINDOW_HEADER):
            table.processed_window = int(header[len(PROCESSED_WINDOW_HEADER):])

        for line in read_lines(path):
            fields = line.split("\t")
            if len(fields) != 3:
                error_msg = f"Corrupt relevancy line {line!r} in {path}"
                get_logger(__name__, "PROD", False).error(error_msg)
                raise RelevancyError(error_msg)
            subject, score, last_window = fields
            table.scores[subject] = RelevanceScore(subject, float(score), int(last_window))

        return table

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(entry.subject, entry.score, entry.last_window) for entry in self.scores.values()],
            columns=["subject", "score", "last_window"]
        ).sort_values(["score", "subject"], ascending=[False, True], ignore_index=True)
