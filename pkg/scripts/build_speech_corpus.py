"""Cut speech recordings into one-second 16 kHz PCM16 clips.

Usage: python scripts/build_speech_corpus.py OUT_DIR SOURCE...

Sources may be 16 kHz or 44.1 kHz mono WAV files or headerless 16 kHz
little-endian PCM16 ``.raw`` files.  Each source is split into consecutive
16000-sample segments; a trailing segment of at least half a second is
zero-padded, quieter segments (RMS below -40 dBFS) are dropped.
"""
import sys
import wave
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

CLIP = 16000
MIN_RMS = 10 ** (-40 / 20)


def load(path):
    if path.suffix == ".raw":
        return np.fromfile(path, "<i2").astype(float) / 32768
    with wave.open(str(path)) as w:
        if w.getnchannels() != 1 or w.getsampwidth() != 2:
            raise ValueError(f"{path}: not mono PCM16")
        x = np.frombuffer(w.readframes(w.getnframes()), "<i2").astype(float) / 32768
        rate = w.getframerate()
    if rate == 44100:
        x = resample_poly(x, 160, 441)
    elif rate != 16000:
        raise ValueError(f"{path}: unsupported rate {rate}")
    return x


def main(out_dir, sources):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kept = 0
    for src in map(Path, sources):
        try:
            x = load(src)
        except (ValueError, wave.Error, EOFError) as exc:
            print(f"skip {src}: {exc}")
            continue
        for k in range(max(1, -(-len(x) // CLIP))):
            seg = x[k * CLIP:(k + 1) * CLIP]
            if len(seg) < CLIP // 2 and k > 0:
                continue
            seg = np.pad(seg, (0, CLIP - len(seg)))
            if np.sqrt(np.mean(seg**2)) < MIN_RMS:
                continue
            pcm = np.clip(np.round(seg * 32768), -32768, 32767).astype("<i2")
            name = out / f"{src.stem.replace('.', '_')}_{k:02d}.wav"
            with wave.open(str(name), "wb") as w:
                w.setnchannels(1)
                w.setsampwidth(2)
                w.setframerate(16000)
                w.writeframes(pcm.tobytes())
            kept += 1
    print(f"{kept} clips written to {out}")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2:])
