/** Evaluation kinds for the mllm-eval/1 stub.
 *
 * Every kind scores the *decoded audio* rather than trusting request
 * metadata, so a client's silence-masking path is exercised for real.
 */

import { DecodedWav } from "./wav.js";

export interface Span {
  start: number; // seconds
  end: number;
}

export type StubSpec =
  | { kind: "energy" }
  | { kind: "additive"; weights: number[]; spans: Span[] }
  | { kind: "keyword"; target: Span; bonus: number };

const SILENCE_EPS = 1e-6;

export function parseSpans(text: string): Span[] {
  return text.split(",").filter(s => s.length > 0).map(part => {
    const [a, b] = part.split(":").map(Number);
    if (!isFinite(a) || !isFinite(b) || b <= a) {
      throw new Error(`bad span ${JSON.stringify(part)}`);
    }
    return { start: a, end: b };
  });
}

/** True when any sample in [floor(start*sr), floor(end*sr)) is audible. */
export function spanIsAudible(audio: DecodedWav, span: Span): boolean {
  const a = Math.min(Math.floor(span.start * audio.sampleRate), audio.samples.length);
  const b = Math.min(Math.floor(span.end * audio.sampleRate), audio.samples.length);
  for (let i = a; i < b; i++) {
    if (Math.abs(audio.samples[i]) > SILENCE_EPS) return true;
  }
  return false;
}

export function evaluate(spec: StubSpec, audio: DecodedWav): number {
  switch (spec.kind) {
    case "energy": {
      // RMS over the whole clip: silencing any audible span lowers it
      let acc = 0;
      for (const s of audio.samples) acc += s * s;
      return audio.samples.length > 0 ? Math.sqrt(acc / audio.samples.length) : 0;
    }
    case "additive": {
      let total = 0;
      spec.spans.forEach((span, i) => {
        if (spanIsAudible(audio, span)) total += spec.weights[i] ?? 0;
      });
      return total;
    }
    case "keyword":
      return spanIsAudible(audio, spec.target) ? spec.bonus : 0;
  }
}
