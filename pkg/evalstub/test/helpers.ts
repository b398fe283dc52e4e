/** PCM16 WAV encoder used to feed the stub in tests. */

export function encodeWavPcm16(samples: number[], sampleRate: number): Buffer {
  const data = Buffer.alloc(samples.length * 2);
  samples.forEach((s, i) => {
    const q = Math.max(-32768, Math.min(32767, Math.round(s * 32768)));
    data.writeInt16LE(q, 2 * i);
  });
  const header = Buffer.alloc(44);
  header.write("RIFF", 0, "ascii");
  header.writeUInt32LE(36 + data.length, 4);
  header.write("WAVE", 8, "ascii");
  header.write("fmt ", 12, "ascii");
  header.writeUInt32LE(16, 16);
  header.writeUInt16LE(1, 20); // PCM
  header.writeUInt16LE(1, 22); // mono
  header.writeUInt32LE(sampleRate, 24);
  header.writeUInt32LE(sampleRate * 2, 28);
  header.writeUInt16LE(2, 32);
  header.writeUInt16LE(16, 34);
  header.write("data", 36, "ascii");
  header.writeUInt32LE(data.length, 40);
  return Buffer.concat([header, data]);
}

/** A clip with tone bursts at the given spans and silence elsewhere. */
export function toneClip(
  spans: Array<[number, number]>,
  duration: number,
  sampleRate = 8000,
): number[] {
  const out = new Array<number>(Math.round(duration * sampleRate)).fill(0);
  for (const [start, end] of spans) {
    for (let i = Math.floor(start * sampleRate); i < Math.floor(end * sampleRate); i++) {
      out[i] = 0.4 * Math.sin((2 * Math.PI * 220 * i) / sampleRate);
    }
  }
  return out;
}
