import os
import threading
from dataclasses import dataclass
from typing import List, Optional, Tuple
from cognistream.config import STORE_FILES
from cognistream.exceptions import EmptySegment, TimestampRegression, UnknownSegment, StoreError
from cognistream.helpers import source_tag_checker, tsv_line
from cognistream.logger import get_logger


@dataclass(frozen=True)
class Segment:
    """
    One appended piece of the raw binary stream

    Parameters
    ----------
    segment_id : int
        Strictly increasing in append order, starting from 0

    data : bytes
        The raw bytes exactly as appended

    timestamp : int
        Logical time in ticks, non-decreasing in append order

    source_tag : str
        Short label of where the bytes came from
    """
    segment_id: int
    data: bytes
    timestamp: int
    source_tag: str


@dataclass(frozen=True)
class StreamWindow:
    """
    A run of consecutive tokens sharing one window index, the time axis of relevancy and forecasting
    """
    window_index: int
    segment_range: Tuple[int, int]
    token_count: int


class StreamStore:
    """
    Append-only persistent layer keeping the raw binary stream with timestamps

    With a directory path the store is file-backed: raw bytes are concatenated into
    'segments.bin' and a line-delimited sidecar 'segments.meta' keeps
    segment_id, offset, length, timestamp and source_tag per segment. Without a path
    the store lives in memory with the same behavior contract

    Appends are serialized by a lock (single writer), reads may run concurrently

    Parameters
    ----------
    path : str, optional (default=None)
        Directory of a file-backed store. It's created if missing and replayed if it already holds segments

    logging_to_file: bool, (default=False)
        If True, the logs will be saved to /logs/cognistream_logs.log as well
    """
    def __init__(self, path: Optional[str] = None, logging_to_file: bool = False):
        self.__logger = get_logger(__name__, "PROD", logging_to_file)
        self.path = path
        self._lock = threading.Lock()
        self._segments: List[Segment] = []
        self._offsets: List[int] = []
        self._total_bytes = 0

        if path is not None:
            os.makedirs(path, exist_ok=True)
            self._data_path = os.path.join(path, STORE_FILES["segments"])
            self._meta_path = os.path.join(path, STORE_FILES["metadata"])
            self.__replay()

    def __repr__(self):
        return f"StreamStore(path={self.path}, segments={len(self._segments)}, bytes={self._total_bytes})"

    def __len__(self) -> int:
        return len(self._segments)

    def __replay(self):
        """
        Rebuilds the in-memory index from the sidecar of an existing file-backed store
        """
        if not os.path.exists(self._meta_path):
            return

        with open(self._data_path, "rb") as file:
            raw = file.read()

        with open(self._meta_path, "r", encoding="utf-8", newline="\n") as file:
            for line_no, line in enumerate(file, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue

                fields = line.split("\t")
                if len(fields) != 5:
                    error_msg = f"Corrupt metadata line {line_no} in {self._meta_path}: expected 5 fields, got {len(fields)}"
                    self.__logger.error(error_msg)
                    raise StoreError(error_msg)

                segment_id, offset, length, timestamp = (int(value) for value in fields[:4])
                if offset + length > len(raw):
                    error_msg = f"Segment {segment_id} points past the end of {self._data_path}"
                    self.__logger.error(error_msg)
                    raise StoreError(error_msg)

                self._segments.append(Segment(segment_id, raw[offset:offset + length], timestamp, fields[4]))
                self._offsets.append(offset)
                self._total_bytes = offset + length

        self.__logger.info(f"[PROCESS] Reopened store at {self.path} with {len(self._segments)} segments")

    def last_timestamp(self) -> Optional[int]:
        return self._segments[-1].timestamp if self._segments else None

    def append(self, data: bytes, timestamp: int, source_tag: str = "") -> int:
        """
        Appends a raw segment to the stream

        Parameters
        ----------
        data : bytes
            Non-empty raw bytes

        timestamp : int
            Logical time, not smaller than the last appended timestamp

        source_tag : str, (default="")
            Short label without tabs or newlines

        Returns
        -------
        int
            The new segment_id (previous max + 1, 0 for an empty store)
        """
        source_tag = source_tag_checker(source_tag)
        data = bytes(data)

        if len(data) == 0:
            error_msg = "Cannot append an empty segment, the stream only keeps non-empty byte sequences"
            self.__logger.error(error_msg)
            raise EmptySegment(error_msg)

        with self._lock:
            last = self.last_timestamp()
            if last is not None and timestamp < last:
                error_msg = f"Timestamp {timestamp} is older than the last appended timestamp {last}"
                self.__logger.error(error_msg)
                raise TimestampRegression(error_msg)

            segment_id = len(self._segments)
            offset = self._total_bytes

            if self.path is not None:
                with open(self._data_path, "ab") as file:
                    file.write(data)
                with open(self._meta_path, "a", encoding="utf-8", newline="\n") as file:
                    file.write(tsv_line(segment_id, offset, len(data), timestamp, source_tag) + "\n")

            self._segments.append(Segment(segment_id, data, timestamp, source_tag))
            self._offsets.append(offset)
            self._total_bytes += len(data)

        return segment_id

    def read(self, segment_id: int) -> Segment:
        """
        Returns the stored segment bit-exact

        Parameters
        ----------
        segment_id : int
            Id returned by append()
        """
        if not isinstance(segment_id, int) or not 0 <= segment_id < len(self._segments):
            error_msg = f"Segment {segment_id} does not exist, the store has {len(self._segments)} segments"
            self.__logger.error(error_msg)
            raise UnknownSegment(error_msg)

        return self._segments[segment_id]

    def segments(self) -> List[Segment]:
        return list(self._segments)

    def concatenated(self) -> bytes:
        return b"".join(segment.data for segment in self._segments)

    def snapshot(self) -> List[Tuple[int, int, int]]:
        """
        Lists (segment_id, timestamp, byte_length) ordered by segment_id
        """
        return [(segment.segment_id, segment.timestamp, len(segment.data)) for segment in self._segments]
