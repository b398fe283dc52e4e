/** Minimal RIFF/WAVE reader: PCM16 and IEEE float32, any channel count. */

export interface DecodedWav {
  samples: Float64Array; // mono (channels averaged), amplitudes in [-1, 1]
  sampleRate: number;
}

export function decodeWav(buf: Buffer): DecodedWav {
  if (buf.length < 12 || buf.toString("ascii", 0, 4) !== "RIFF" ||
      buf.toString("ascii", 8, 12) !== "WAVE") {
    throw new Error("not a RIFF/WAVE file");
  }
  let fmt: Buffer | null = null;
  let data: Buffer | null = null;
  let off = 12;
  while (off + 8 <= buf.length) {
    const id = buf.toString("ascii", off, off + 4);
    const size = buf.readUInt32LE(off + 4);
    const body = buf.subarray(off + 8, off + 8 + size);
    if (id === "fmt ") fmt = body;
    else if (id === "data") data = body;
    off += 8 + size + (size & 1);
  }
  if (!fmt || fmt.length < 16) throw new Error("missing fmt chunk");
  if (!data) throw new Error("missing data chunk");
  const audioFormat = fmt.readUInt16LE(0);
  const channels = fmt.readUInt16LE(2);
  const sampleRate = fmt.readUInt32LE(4);
  const bits = fmt.readUInt16LE(14);
  if (channels < 1) throw new Error("zero channels");

  let raw: Float64Array;
  if (audioFormat === 1 && bits === 16) {
    const count = Math.floor(data.length / 2);
    raw = new Float64Array(count);
    for (let i = 0; i < count; i++) raw[i] = data.readInt16LE(2 * i) / 32768;
  } else if (audioFormat === 3 && bits === 32) {
    const count = Math.floor(data.length / 4);
    raw = new Float64Array(count);
    for (let i = 0; i < count; i++) raw[i] = data.readFloatLE(4 * i);
  } else {
    throw new Error(`unsupported encoding (format=${audioFormat}, bits=${bits})`);
  }

  if (channels === 1) return { samples: raw, sampleRate };
  const frames = Math.floor(raw.length / channels);
  const mono = new Float64Array(frames);
  for (let f = 0; f < frames; f++) {
    let acc = 0;
    for (let c = 0; c < channels; c++) acc += raw[f * channels + c];
    mono[f] = acc / channels;
  }
  return { samples: mono, sampleRate };
}
