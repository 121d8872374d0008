import { describe, expect, it } from "vitest";

import { defaultForm, toPayload, validateForm, waypointsActive } from "../src/form.js";

describe("condition form validation", () => {
  it("accepts a plain text-to-motion form", () => {
    const form = defaultForm();
    form.text = "a person walks";
    expect(validateForm(form)).toEqual([]);
  });

  it("blocks dual audio before any network call", () => {
    const form = defaultForm();
    form.text = "x";
    form.speechRef = "a.f32";
    form.musicRef = "b.f32";
    const errors = validateForm(form);
    const fields = errors.map((e) => e.field);
    expect(fields).toContain("speech_ref");
    expect(fields).toContain("music_ref");
  });

  it("requires waypoints for trajectory tasks only", () => {
    const form = defaultForm();
    form.task = "trajectory";
    expect(validateForm(form).map((e) => e.field)).toContain("waypoints");
    form.waypoints = [[1, 0]];
    expect(validateForm(form)).toEqual([]);
    expect(waypointsActive("trajectory")).toBe(true);
    expect(waypointsActive("t2m")).toBe(false);
  });

  it("requires a caption for t2m and audio for s2g/m2d", () => {
    const form = defaultForm();
    expect(validateForm(form).map((e) => e.field)).toContain("text");
    form.task = "s2g";
    expect(validateForm(form).map((e) => e.field)).toContain("speech_ref");
    form.task = "m2d";
    expect(validateForm(form).map((e) => e.field)).toContain("music_ref");
  });

  it("bounds the frame count", () => {
    const form = defaultForm();
    form.text = "x";
    form.frames = 0;
    expect(validateForm(form).map((e) => e.field)).toContain("frames");
    form.frames = 151;
    expect(validateForm(form, 150).map((e) => e.field)).toContain("frames");
  });
});

describe("payload assembly", () => {
  it("sends trajectory waypoints in draw order", () => {
    const form = defaultForm();
    form.task = "trajectory";
    form.waypoints = [
      [0.5, 0.5],
      [1.0, 0.0],
      [0.0, -1.0],
    ];
    const payload = toPayload(form);
    expect(payload.waypoints).toEqual([
      [0.5, 0.5],
      [1.0, 0.0],
      [0.0, -1.0],
    ]);
    expect(payload.task).toBe("trajectory");
  });

  it("omits waypoints for non-trajectory tasks", () => {
    const form = defaultForm();
    form.task = "t2m";
    form.text = "hello";
    form.waypoints = [[1, 1]];
    const payload = toPayload(form);
    expect(payload.waypoints).toBeUndefined();
    expect(payload.text).toBe("hello");
  });

  it("carries prefix/suffix only for the tasks that use them", () => {
    const form = defaultForm();
    form.text = "x";
    form.task = "predict";
    form.prefixFrames = 25;
    expect(toPayload(form).prefix_frames).toBe(25);
    expect(toPayload(form).suffix_frames).toBeUndefined();
    form.task = "inbetween";
    form.suffixFrames = 12;
    const payload = toPayload(form);
    expect(payload.prefix_frames).toBe(25);
    expect(payload.suffix_frames).toBe(12);
  });

  it("omits empty audio refs", () => {
    const form = defaultForm();
    form.text = "x";
    const payload = toPayload(form);
    expect(payload.speech_ref).toBeUndefined();
    expect(payload.music_ref).toBeUndefined();
  });
});
