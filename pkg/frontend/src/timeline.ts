// Timeline state. Cards come only from service responses: after every
// generation the store refreshes from GET timeline, so a page reload
// reconstructs the identical view and the client never fabricates clips.

import type { TimelineCard, TimelineResponse } from "./api.js";

export interface CardView {
  clipIndex: number;
  clipId: string;
  caption: string;
  task: string;
  frames: number;
  durationSeconds: number;
}

export class TimelineStore {
  sessionId: string | null = null;
  cards: CardView[] = [];
  totalFrames = 0;
  rootPath: [number, number][] = [];

  apply(response: TimelineResponse): void {
    this.sessionId = response.session_id;
    this.cards = response.clips.map(cardView);
    this.totalFrames = response.total_frames;
    this.rootPath = response.root_path;
  }

  clear(): void {
    this.sessionId = null;
    this.cards = [];
    this.totalFrames = 0;
    this.rootPath = [];
  }
}

export function cardView(card: TimelineCard): CardView {
  return {
    clipIndex: card.clip_index,
    clipId: card.clip_id,
    caption: card.caption ?? "(no caption)",
    task: card.task,
    frames: card.frames,
    durationSeconds: card.frames / 30,
  };
}
