// Gallery view model: list, enroll (name + embeddings upload), delete.

import type { ApiClient } from "./api.js";
import type { PersonRecord } from "./types.js";

export class GalleryModel {
  records: PersonRecord[] = [];
  version = 0;
  error: string | null = null;

  constructor(private readonly api: ApiClient) {}

  async refresh(): Promise<void> {
    const doc = await this.api.getGallery();
    this.version = doc.version;
    this.records = doc.body;
  }

  /** Parse an uploaded embeddings file: a JSON list of numeric vectors. */
  static parseEmbeddings(text: string): number[][] {
    const data = JSON.parse(text);
    if (!Array.isArray(data) || data.length === 0) {
      throw new Error("expected a non-empty JSON list of vectors");
    }
    const dim = Array.isArray(data[0]) ? data[0].length : -1;
    for (const row of data) {
      if (!Array.isArray(row) || row.length !== dim || !row.every((v) => typeof v === "number")) {
        throw new Error("every embedding must be a numeric vector of the same length");
      }
    }
    return data as number[][];
  }

  async enroll(name: string, embeddingsText: string): Promise<PersonRecord> {
    this.error = null;
    const embeddings = GalleryModel.parseEmbeddings(embeddingsText);
    const out = await this.api.enroll(name, embeddings);
    this.version = out.version;
    await this.refresh();
    return out.record;
  }

  async remove(personId: string): Promise<void> {
    this.error = null;
    await this.api.deletePerson(personId);
    await this.refresh();
  }
}
