// Form model for the HRV intervention rule editor. Client-side validation
// only gates the submit button; the server remains the authority and its
// schema errors are surfaced at the offending field.

import type { RuleEntry, RulesDocument } from "./types.js";

export interface RuleFormFields {
  id: string;
  loMs: number;
  hiMs: number;
  clipId: string;
  cooldownMs: number;
  activityKind: string; // "" = no activity condition
  enabled: boolean;
}

export type FieldErrors = Partial<Record<keyof RuleFormFields, string>>;

export const ACTIVITY_KINDS = ["", "still", "walking", "running", "in_vehicle", "unknown"];

export class RuleFormModel {
  fields: RuleFormFields;
  serverError: { path?: string; message: string } | null = null;

  constructor(fields?: Partial<RuleFormFields>) {
    this.fields = {
      id: "calm-breath",
      loMs: 20,
      hiMs: 100,
      clipId: "calm_breath",
      cooldownMs: 300_000,
      activityKind: "still",
      enabled: true,
      ...fields,
    };
  }

  /** Populate from the first HRV rule of a fetched document. */
  static fromDocument(doc: RulesDocument): RuleFormModel {
    const rule = (doc.rules ?? []).find((r) => r.trigger.type === "hrv_out_of_range");
    if (!rule) {
      return new RuleFormModel();
    }
    const audio = rule.actions.find((a) => a.type === "play_audio");
    const activity = (rule.conditions ?? []).find((c) => c.type === "activity_is");
    return new RuleFormModel({
      id: rule.id,
      loMs: Number(rule.trigger["lo_ms"]),
      hiMs: Number(rule.trigger["hi_ms"]),
      clipId: audio ? String(audio["clip_id"]) : "",
      cooldownMs: rule.cooldown_ms ?? 60_000,
      activityKind: activity ? String(activity["kind"]) : "",
      enabled: rule.enabled ?? true,
    });
  }

  validate(): FieldErrors {
    const errors: FieldErrors = {};
    const f = this.fields;
    if (!f.id.trim()) {
      errors.id = "rule id is required";
    }
    if (!Number.isFinite(f.loMs) || f.loMs <= 0) {
      errors.loMs = "lower bound must be positive";
    }
    if (!Number.isFinite(f.hiMs) || f.hiMs <= 0) {
      errors.hiMs = "upper bound must be positive";
    } else if (Number.isFinite(f.loMs) && f.loMs >= f.hiMs) {
      errors.hiMs = "upper bound must exceed the lower bound";
    }
    if (!f.clipId.trim()) {
      errors.clipId = "audio clip id is required";
    }
    if (!Number.isInteger(f.cooldownMs) || f.cooldownMs < 0) {
      errors.cooldownMs = "cooldown must be a non-negative integer";
    }
    if (!ACTIVITY_KINDS.includes(f.activityKind)) {
      errors.activityKind = "unknown activity kind";
    }
    return errors;
  }

  get canSubmit(): boolean {
    return Object.keys(this.validate()).length === 0;
  }

  toRule(): RuleEntry {
    const f = this.fields;
    const conditions = f.activityKind
      ? [{ type: "activity_is", kind: f.activityKind }]
      : [];
    return {
      id: f.id,
      enabled: f.enabled,
      trigger: { type: "hrv_out_of_range", lo_ms: f.loMs, hi_ms: f.hiMs },
      conditions,
      actions: [
        { type: "play_audio", clip_id: f.clipId },
        { type: "set_sampling_mode", mode: "frequent" },
      ],
      cooldown_ms: f.cooldownMs,
    };
  }

  /** New document with this rule replacing its previous version (matched by
   * id) and the engine-level HRV range kept in lockstep with the trigger. */
  applyTo(doc: RulesDocument): RulesDocument {
    const rule = this.toRule();
    const rules = [...(doc.rules ?? [])];
    const index = rules.findIndex((r) => r.id === rule.id);
    if (index >= 0) {
      rules[index] = rule;
    } else {
      rules.push(rule);
    }
    return {
      ...doc,
      schema_version: doc.schema_version ?? 1,
      hrv_range: [this.fields.loMs, this.fields.hiMs],
      rules,
    };
  }
}
