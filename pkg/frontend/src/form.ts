// Condition form state and client-side validation mirroring docs/api.md.
// Only rules published in the schema are duplicated here; everything else is
// left to the service.

import type { GeneratePayload } from "./api.js";

export const TASKS = [
  "t2m",
  "predict",
  "inbetween",
  "trajectory",
  "dense",
  "s2g",
  "m2d",
] as const;

export type TaskKind = (typeof TASKS)[number];

export interface FormState {
  text: string;
  task: TaskKind;
  frames: number;
  prefixFrames: number;
  suffixFrames: number;
  waypoints: [number, number][];
  speechRef: string;
  musicRef: string;
  seed: number;
}

export function defaultForm(maxFrames = 150): FormState {
  return {
    text: "",
    task: "t2m",
    frames: maxFrames,
    prefixFrames: 30,
    suffixFrames: 10,
    waypoints: [],
    speechRef: "",
    musicRef: "",
    seed: 7,
  };
}

export interface FieldError {
  field: string;
  message: string;
}

export function waypointsActive(task: TaskKind): boolean {
  return task === "trajectory";
}

export function validateForm(form: FormState, maxFrames = 150): FieldError[] {
  const errors: FieldError[] = [];
  if (form.speechRef && form.musicRef) {
    errors.push({
      field: "speech_ref",
      message: "speech and music are mutually exclusive",
    });
    errors.push({
      field: "music_ref",
      message: "speech and music are mutually exclusive",
    });
  }
  if (form.task === "trajectory" && form.waypoints.length === 0) {
    errors.push({ field: "waypoints", message: "trajectory needs waypoints" });
  }
  if (!Number.isInteger(form.frames) || form.frames < 1 || form.frames > maxFrames) {
    errors.push({ field: "frames", message: `frames must be 1..${maxFrames}` });
  }
  if (form.task === "t2m" && form.text.trim() === "") {
    errors.push({ field: "text", message: "text-to-motion needs a caption" });
  }
  if (form.task === "s2g" && !form.speechRef) {
    errors.push({ field: "speech_ref", message: "speech-to-gesture needs audio" });
  }
  if (form.task === "m2d" && !form.musicRef) {
    errors.push({ field: "music_ref", message: "music-to-dance needs audio" });
  }
  return errors;
}

export function toPayload(form: FormState): GeneratePayload {
  const payload: GeneratePayload = { task: form.task, frames: form.frames };
  if (form.text.trim() !== "") payload.text = form.text.trim();
  if (form.task === "predict") payload.prefix_frames = form.prefixFrames;
  if (form.task === "inbetween") {
    payload.prefix_frames = form.prefixFrames;
    payload.suffix_frames = form.suffixFrames;
  }
  if (waypointsActive(form.task) && form.waypoints.length > 0) {
    // waypoints travel in draw order as sparse clip-local [x, z] targets
    payload.waypoints = form.waypoints.map(([x, z]) => [x, z]);
  }
  if (form.speechRef) payload.speech_ref = form.speechRef;
  if (form.musicRef) payload.music_ref = form.musicRef;
  return payload;
}
