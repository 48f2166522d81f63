"""Text-to-speech: per-segment synthesis into canonical PCM (22050 Hz mono
16-bit) with measured durations, a silence fallback timed by speaking rate,
and a digest-keyed clip cache.
"""

from __future__ import annotations

import array
import hashlib
import io
import os
import tempfile
import wave
from dataclasses import dataclass
from pathlib import Path

import httpx

from .errors import ProviderUnreachable
from .script import NarrationSegment

SAMPLE_RATE = 22050
SAMPLE_WIDTH = 2  # bytes, signed 16-bit
SAMPLES_PER_MS = SAMPLE_RATE / 1000.0
DEFAULT_RATE_WPM = 150


@dataclass(frozen=True)
class AudioClip:
    segment_id: str
    samples: bytes  # PCM mono 22050 Hz 16-bit
    duration_ms: int

    @classmethod
    def from_samples(cls, segment_id: str, samples: bytes) -> "AudioClip":
        return cls(segment_id, samples, round(len(samples) / SAMPLE_WIDTH / SAMPLES_PER_MS))


@dataclass(frozen=True)
class VoiceSpec:
    provider: str = "silence_fallback"  # http_tts | silence_fallback
    voice_id: str = "default"
    rate_wpm: int = DEFAULT_RATE_WPM

    def __post_init__(self):
        if self.rate_wpm <= 0:
            raise ValueError("rate_wpm must be positive")


def word_count(text: str) -> int:
    """Whitespace tokens after stripping markdown emphasis markers."""
    cleaned = text.replace("*", "").replace("`", "")
    return len(cleaned.split())


def fallback_duration_ms(text: str, rate_wpm: int) -> int:
    return round(word_count(text) / (rate_wpm / 60) * 1000)


def silence(duration_ms: int) -> bytes:
    return b"\x00\x00" * round(duration_ms * SAMPLES_PER_MS)


def _cache_digest(text: str, voice: VoiceSpec) -> str:
    key = f"{voice.provider}|{voice.voice_id}|{voice.rate_wpm}|{text}"
    return hashlib.sha256(key.encode("utf-8")).hexdigest()


def _to_int16(frames: bytes, sampwidth: int) -> array.array:
    if sampwidth == 2:
        data = array.array("h")
        data.frombytes(frames)
        return data
    if sampwidth == 1:  # unsigned 8-bit
        return array.array("h", ((b - 128) << 8 for b in frames))
    if sampwidth == 4:
        wide = array.array("i")
        wide.frombytes(frames)
        return array.array("h", (v >> 16 for v in wide))
    raise ProviderUnreachable(f"unsupported TTS sample width {sampwidth}")


def _to_mono(data: array.array, channels: int) -> array.array:
    if channels == 1:
        return data
    mono = array.array("h")
    for i in range(0, len(data) - channels + 1, channels):
        mono.append(sum(data[i:i + channels]) // channels)
    return mono


def _resample(data: array.array, src_rate: int, dst_rate: int) -> array.array:
    if src_rate == dst_rate or not data:
        return data
    out_len = max(1, round(len(data) * dst_rate / src_rate))
    out = array.array("h")
    step = (len(data) - 1) / (out_len - 1) if out_len > 1 else 0.0
    for i in range(out_len):
        pos = i * step
        left = int(pos)
        right = min(left + 1, len(data) - 1)
        frac = pos - left
        out.append(int(data[left] * (1 - frac) + data[right] * frac))
    return out


def decode_wav_to_canonical(payload: bytes) -> bytes:
    """Any PCM WAV -> 22050 Hz mono 16-bit little-endian."""
    try:
        with wave.open(io.BytesIO(payload), "rb") as reader:
            channels = reader.getnchannels()
            sampwidth = reader.getsampwidth()
            rate = reader.getframerate()
            frames = reader.readframes(reader.getnframes())
    except (wave.Error, EOFError) as exc:
        raise ProviderUnreachable(f"TTS returned undecodable audio: {exc}") from exc
    data = _to_int16(frames, sampwidth)
    data = _to_mono(data, channels)
    data = _resample(data, rate, SAMPLE_RATE)
    return data.tobytes()


class TtsEngine:
    """Synthesizes narration segments, caching clips by (text, voice) digest.

    Cache writes are atomic renames, so concurrent synthesis of the same
    segment is idempotent.
    """

    def __init__(self, cache_dir: str | Path | None = None,
                 endpoint: str | None = None,
                 transport: httpx.BaseTransport | None = None,
                 timeout: float = 60.0):
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.endpoint = endpoint or os.environ.get("CELLCAST_TTS_URL")
        self._transport = transport
        self.timeout = timeout
        self._memory: dict[str, bytes] = {}

    def _cache_load(self, digest: str) -> bytes | None:
        if digest in self._memory:
            return self._memory[digest]
        if self.cache_dir is not None:
            path = self.cache_dir / f"{digest}.pcm"
            if path.exists():
                samples = path.read_bytes()
                self._memory[digest] = samples
                return samples
        return None

    def _cache_store(self, digest: str, samples: bytes) -> None:
        self._memory[digest] = samples
        if self.cache_dir is not None:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            fd, tmp_name = tempfile.mkstemp(dir=self.cache_dir, suffix=".tmp")
            with os.fdopen(fd, "wb") as handle:
                handle.write(samples)
            os.replace(tmp_name, self.cache_dir / f"{digest}.pcm")

    def _http_synthesize(self, text: str, voice: VoiceSpec) -> bytes:
        if not self.endpoint:
            raise ProviderUnreachable("no TTS endpoint configured (CELLCAST_TTS_URL)")
        try:
            with httpx.Client(transport=self._transport, timeout=self.timeout) as client:
                response = client.post(self.endpoint, json={"text": text, "voice": voice.voice_id})
                response.raise_for_status()
                payload = response.content
        except httpx.HTTPError as exc:
            raise ProviderUnreachable(f"TTS provider failed: {exc}") from exc
        return decode_wav_to_canonical(payload)

    def synthesize(self, segment: NarrationSegment, voice: VoiceSpec) -> AudioClip:
        if not segment.text.strip():
            raise ValueError(f"segment {segment.id} has empty text")
        digest = _cache_digest(segment.text, voice)
        samples = self._cache_load(digest)
        if samples is None:
            if voice.provider == "http_tts":
                samples = self._http_synthesize(segment.text, voice)
            elif voice.provider == "silence_fallback":
                samples = silence(fallback_duration_ms(segment.text, voice.rate_wpm))
            else:
                raise ValueError(f"unknown TTS provider {voice.provider!r}")
            self._cache_store(digest, samples)
        return AudioClip.from_samples(segment.id, samples)


def voice_from_env(stub: bool = False) -> VoiceSpec:
    if stub or os.environ.get("CELLCAST_STUB_TTS") == "1" or not os.environ.get("CELLCAST_TTS_URL"):
        return VoiceSpec(provider="silence_fallback",
                         voice_id=os.environ.get("CELLCAST_TTS_VOICE", "default"))
    return VoiceSpec(provider="http_tts",
                     voice_id=os.environ.get("CELLCAST_TTS_VOICE", "default"))
