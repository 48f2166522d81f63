import io
import threading
import wave

import httpx
import pytest
from hypothesis import given, strategies as st

from cellcast.errors import ProviderUnreachable
from cellcast.script import NarrationCategory, NarrationSegment
from cellcast.tts import (
    SAMPLE_RATE,
    TtsEngine,
    VoiceSpec,
    fallback_duration_ms,
    word_count,
)


def seg(text, sid="g0.1"):
    return NarrationSegment(id=sid, text=text, category=NarrationCategory.BACKGROUND)


def test_word_count_strips_markdown_markers():
    assert word_count("*head()* shows rows") == 3
    assert word_count("use `dropna` now") == 3


def test_fallback_duration_25_words_at_150_wpm():
    text = " ".join(["word"] * 25)
    assert fallback_duration_ms(text, 150) == 10_000


def test_fallback_duration_single_word():
    assert fallback_duration_ms("hello", 150) == 400


def test_synthesize_silence_duration_invariant():
    engine = TtsEngine()
    clip = engine.synthesize(seg(" ".join(["word"] * 25)), VoiceSpec())
    assert clip.duration_ms == 10_000
    assert clip.duration_ms == round(len(clip.samples) / 2 / (SAMPLE_RATE / 1000))
    assert clip.samples == b"\x00" * len(clip.samples)


@given(st.integers(1, 400), st.sampled_from([60, 120, 150, 180, 240]))
def test_fallback_duration_is_pure_in_word_count_and_rate(words, rate):
    text = " ".join(["w"] * words)
    expected = round(words / (rate / 60) * 1000)
    assert fallback_duration_ms(text, rate) == expected
    assert fallback_duration_ms(text, rate) == fallback_duration_ms(text, rate)


def test_rate_must_be_positive():
    with pytest.raises(ValueError):
        VoiceSpec(rate_wpm=0)


class CountingTransport(httpx.BaseTransport):
    def __init__(self, payload):
        self.payload = payload
        self.calls = 0

    def handle_request(self, request):
        self.calls += 1
        return httpx.Response(200, content=self.payload)


def make_wav(rate=44100, channels=2, seconds=0.25, width=2):
    frame_count = int(rate * seconds)
    buffer = io.BytesIO()
    with wave.open(buffer, "wb") as writer:
        writer.setnchannels(channels)
        writer.setsampwidth(width)
        writer.setframerate(rate)
        value = (1000).to_bytes(width, "little", signed=True)
        writer.writeframes(value * frame_count * channels)
    return buffer.getvalue()


def test_http_tts_resamples_to_canonical(tmp_path):
    transport = CountingTransport(make_wav(rate=44100, channels=2, seconds=0.5))
    engine = TtsEngine(cache_dir=tmp_path, endpoint="http://tts.test/speak", transport=transport)
    clip = engine.synthesize(seg("hello world"), VoiceSpec(provider="http_tts"))
    assert abs(clip.duration_ms - 500) <= 2
    assert len(clip.samples) % 2 == 0


def test_cache_avoids_second_provider_call(tmp_path):
    transport = CountingTransport(make_wav(seconds=0.1))
    engine = TtsEngine(cache_dir=tmp_path, endpoint="http://tts.test/speak", transport=transport)
    voice = VoiceSpec(provider="http_tts")
    first = engine.synthesize(seg("cache me"), voice)
    second = engine.synthesize(seg("cache me"), voice)
    assert transport.calls == 1
    assert first.samples == second.samples


def test_cache_is_shared_via_disk(tmp_path):
    transport = CountingTransport(make_wav(seconds=0.1))
    voice = VoiceSpec(provider="http_tts")
    first = TtsEngine(cache_dir=tmp_path, endpoint="http://tts.test/speak", transport=transport)
    clip = first.synthesize(seg("persisted"), voice)
    cold = TtsEngine(cache_dir=tmp_path, endpoint="http://tts.test/speak",
                     transport=CountingTransport(b"unused"))
    replay = cold.synthesize(seg("persisted"), voice)
    assert replay.samples == clip.samples


def test_concurrent_synthesis_of_same_key_is_idempotent(tmp_path):
    voice = VoiceSpec()
    clips = []
    errors = []

    def work():
        try:
            engine = TtsEngine(cache_dir=tmp_path)
            clips.append(engine.synthesize(seg("the same sentence for everyone"), voice))
        except Exception as exc:  # noqa: BLE001
            errors.append(exc)

    threads = [threading.Thread(target=work) for _ in range(8)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    assert not errors
    assert len({clip.samples for clip in clips}) == 1
    assert len(list(tmp_path.glob("*.pcm"))) == 1


def test_http_provider_unreachable():
    class Refuse(httpx.BaseTransport):
        def handle_request(self, request):
            raise httpx.ConnectError("no route")

    engine = TtsEngine(endpoint="http://tts.test/speak", transport=Refuse())
    with pytest.raises(ProviderUnreachable):
        engine.synthesize(seg("unreachable"), VoiceSpec(provider="http_tts"))


def test_empty_text_rejected():
    with pytest.raises(ValueError):
        TtsEngine().synthesize(seg("   "), VoiceSpec())
