/** Stdio server for the mllm-eval/1 protocol.
 *
 * Emits one handshake line, then answers each request line in order.
 * A malformed line gets an error response (id -1 if the id itself was
 * unreadable) and the loop continues.
 */

import readline from "node:readline";
import { parseArgs } from "node:util";
import { stdin, stdout, exit } from "node:process";

import { decodeWav } from "./wav.js";
import { StubSpec, evaluate, parseSpans } from "./stub.js";

function specFromArgs(argv: string[]): StubSpec {
  const { values } = parseArgs({
    args: argv,
    options: {
      kind: { type: "string", default: "energy" },
      weights: { type: "string", default: "" },
      spans: { type: "string", default: "" },
      target: { type: "string", default: "" },
      bonus: { type: "string", default: "1" },
    },
  });
  switch (values.kind) {
    case "energy":
      return { kind: "energy" };
    case "additive": {
      const weights = (values.weights as string)
        .split(",").filter(s => s.length > 0).map(Number);
      const spans = parseSpans(values.spans as string);
      if (weights.length !== spans.length) {
        throw new Error(`${weights.length} weights for ${spans.length} spans`);
      }
      return { kind: "additive", weights, spans };
    }
    case "keyword": {
      const targets = parseSpans(values.target as string);
      if (targets.length !== 1) throw new Error("keyword kind needs one --target");
      return { kind: "keyword", target: targets[0], bonus: Number(values.bonus) };
    }
    default:
      throw new Error(`unknown kind ${JSON.stringify(values.kind)}`);
  }
}

function send(msg: object): void {
  stdout.write(JSON.stringify(msg) + "\n");
}

function main(): void {
  let spec: StubSpec;
  try {
    spec = specFromArgs(process.argv.slice(2));
  } catch (err) {
    console.error(String(err));
    exit(2);
  }

  send({ protocol: "mllm-eval/1", deterministic: true });

  const lines = readline.createInterface({ input: stdin, terminal: false });
  lines.on("line", (line) => {
    if (line.trim() === "") return;
    let id = -1;
    try {
      const req = JSON.parse(line);
      if (typeof req.id === "number") id = req.id;
      if (req.op !== "evaluate") throw new Error(`unknown op ${JSON.stringify(req.op)}`);
      if (typeof req.audio_wav_b64 !== "string") throw new Error("missing audio_wav_b64");
      const audio = decodeWav(Buffer.from(req.audio_wav_b64, "base64"));
      send({ id, value: evaluate(spec, audio) });
    } catch (err) {
      send({ id, error: String(err instanceof Error ? err.message : err) });
    }
  });
}

main();
