/**
 * Browser entry point: wires the camera, stream, overlay, transfer function
 * panel, and trajectory recorder to the page in index.html.
 *
 * The service base URL comes from the ?service= query parameter and falls
 * back to the page's own origin.
 */

import { OrbitCamera } from "./camera.js";
import { Stream, ViewerClient } from "./client.js";
import { barFractions, overlayLines, StatsAccumulator } from "./overlay.js";
import type { FrameMessage, ManifestInfo } from "./protocol.js";
import { TrajectoryRecorder } from "./recorder.js";

const IMAGE_SIZE = 512;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing page element #${id}`);
  }
  return node as T;
}

class ViewerApp {
  private readonly client: ViewerClient;
  private readonly camera = new OrbitCamera({ radius: 3.0 });
  private readonly stats = new StatsAccumulator();
  private readonly recorder = new TrajectoryRecorder();
  private stream: Stream | null = null;
  private sessionId: string | null = null;
  private latest: FrameMessage | null = null;

  private readonly canvas = el<HTMLCanvasElement>("view");
  private readonly overlay = el<HTMLDivElement>("overlay");
  private readonly bars = {
    caching: el<HTMLDivElement>("bar-caching"),
    rendering: el<HTMLDivElement>("bar-rendering"),
    latency: el<HTMLDivElement>("bar-latency"),
  };
  private readonly tfSelect = el<HTMLSelectElement>("tf");
  private readonly prefetchSelect = el<HTMLSelectElement>("prefetch");
  private readonly recordToggle = el<HTMLInputElement>("record");
  private readonly exportButton = el<HTMLButtonElement>("export");
  private readonly status = el<HTMLDivElement>("status");

  constructor(serviceUrl: string) {
    this.client = new ViewerClient(serviceUrl);
  }

  async start(): Promise<void> {
    this.say("fetching manifest ...");
    const manifest = await this.client.manifest();
    this.fillTfPanel(manifest);
    this.bindInput();
    await this.openSession();
  }

  private fillTfPanel(manifest: ManifestInfo): void {
    this.tfSelect.innerHTML = "";
    for (const name of manifest.tf_presets) {
      const option = document.createElement("option");
      option.value = name;
      option.textContent = name;
      this.tfSelect.append(option);
    }
    this.tfSelect.onchange = () => void this.openSession();
    this.prefetchSelect.onchange = () => void this.openSession();
  }

  /** (Re)create the session and stream; called at startup and on TF switch. */
  private async openSession(): Promise<void> {
    this.stream?.close();
    this.stream = null;
    this.stats.clear();
    this.recorder.clear();
    this.say("creating session ...");
    const session = await this.client.createSession({
      tf: this.tfSelect.value || "ml",
      width: IMAGE_SIZE,
      height: IMAGE_SIZE,
      prefetch: (this.prefetchSelect.value || "off") as "off" | "static" | "linear",
    });
    this.sessionId = session.session_id;
    this.canvas.width = session.width;
    this.canvas.height = session.height;
    const stream = this.client.openStream(session.session_id);
    stream.onsend = (pov) => {
      this.recorder.recording = this.recordToggle.checked;
      this.recorder.record(pov);
    };
    stream.onframe = (frame) => this.showFrame(frame);
    stream.onerror = (err) => this.say(`service error: ${err.error}`);
    stream.onclose = () => this.say("stream closed");
    await stream.ready();
    this.stream = stream;
    this.say(`session ${session.session_id.slice(0, 8)} open`);
    stream.sendPov(this.camera.pov());
  }

  private bindInput(): void {
    let dragging = false;
    let lastX = 0;
    let lastY = 0;
    this.canvas.addEventListener("pointerdown", (ev) => {
      dragging = true;
      lastX = ev.clientX;
      lastY = ev.clientY;
      this.canvas.setPointerCapture(ev.pointerId);
    });
    this.canvas.addEventListener("pointermove", (ev) => {
      if (!dragging) {
        return;
      }
      this.camera.drag(ev.clientX - lastX, ev.clientY - lastY);
      lastX = ev.clientX;
      lastY = ev.clientY;
      this.pushPose();
    });
    this.canvas.addEventListener("pointerup", (ev) => {
      dragging = false;
      this.canvas.releasePointerCapture(ev.pointerId);
    });
    this.canvas.addEventListener("wheel", (ev) => {
      ev.preventDefault();
      this.camera.dolly(Math.sign(ev.deltaY));
      this.pushPose();
    }, { passive: false });
    window.addEventListener("keydown", (ev) => {
      const panStep = 0.08;
      const steps: Record<string, [number, number]> = {
        ArrowLeft: [-panStep, 0],
        ArrowRight: [panStep, 0],
        ArrowUp: [0, panStep],
        ArrowDown: [0, -panStep],
        a: [-panStep, 0],
        d: [panStep, 0],
        w: [0, panStep],
        s: [0, -panStep],
      };
      const move = steps[ev.key];
      if (move) {
        ev.preventDefault();
        this.camera.pan(move[0], move[1]);
        this.pushPose();
      }
    });
    this.exportButton.addEventListener("click", () => this.exportTrajectory());
  }

  /** Hand the current pose to the stream, which paces it per displayed frame. */
  private pushPose(): void {
    this.stream?.sendPov(this.camera.pov());
  }

  private showFrame(frame: FrameMessage): void {
    this.latest = frame;
    this.stats.add(frame.timing);
    const image = new Image();
    image.onload = () => {
      const ctx = this.canvas.getContext("2d");
      ctx?.drawImage(image, 0, 0, this.canvas.width, this.canvas.height);
    };
    image.src = `data:image/png;base64,${frame.png}`;
    this.updateOverlay();
  }

  private updateOverlay(): void {
    const agg = this.stats.aggregate();
    const lines = overlayLines(this.latest?.timing ?? null, agg);
    this.overlay.textContent = lines.join("\n");
    if (this.latest) {
      const fractions = barFractions(this.latest.timing, 250);
      this.bars.caching.style.width = `${100 * fractions.caching}%`;
      this.bars.rendering.style.width = `${100 * fractions.rendering}%`;
      this.bars.latency.style.width = `${100 * fractions.latency}%`;
    }
  }

  private exportTrajectory(): void {
    if (this.recorder.count === 0) {
      this.say("nothing recorded yet (tick 'record' and move the camera)");
      return;
    }
    const blob = new Blob([this.recorder.lines()], { type: "application/jsonl" });
    const link = document.createElement("a");
    link.href = URL.createObjectURL(blob);
    link.download = "trajectory.jsonl";
    link.click();
    URL.revokeObjectURL(link.href);
    this.say(`exported ${this.recorder.count} poses`);
  }

  private say(text: string): void {
    const sid = this.sessionId ? ` [${this.sessionId.slice(0, 8)}]` : "";
    this.status.textContent = `${text}${sid}`;
  }
}

const service =
  new URLSearchParams(window.location.search).get("service") ?? window.location.origin;
const app = new ViewerApp(service);
app.start().catch((err) => {
  el<HTMLDivElement>("status").textContent = `startup failed: ${String(err)}`;
});
