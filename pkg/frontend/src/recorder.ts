/**
 * Records every pose the viewer sends, for export as a trajectory file the
 * command-line replay can run unchanged.
 */

import { parseTrajectoryLines, toTrajectoryLines, type Pov } from "./protocol.js";

export class TrajectoryRecorder {
  private povs: Pov[] = [];
  recording = false;

  /** Store a pose if recording is on. Returns whether it was stored. */
  record(pov: Pov): boolean {
    if (!this.recording) {
      return false;
    }
    this.povs.push({ ...pov, pos: [...pov.pos], dir: [...pov.dir], up: [...pov.up] });
    return true;
  }

  get count(): number {
    return this.povs.length;
  }

  clear(): void {
    this.povs.length = 0;
  }

  /**
   * The recorded sequence in trajectory file format (one JSON object per
   * line). The output is re-parsed through the schema validator before
   * being handed out, so an export is guaranteed to replay.
   */
  lines(): string {
    const text = toTrajectoryLines(this.povs);
    parseTrajectoryLines(text);
    return text;
  }
}
