// Registrar workflow: look a student up in the institution registry, assign
// whole-number course credits, follow the transfer to confirmation. The
// registrar key stays in the browser session; only request signatures go out.

import type { NodeApi } from "../api.js";
import { ApiError, type KeyMaterial, type TxView } from "../types.js";

export interface StudentSummary {
  student_id: string;
  multisig_address: string;
  registration_confirmed: boolean;
  course_log: { course_id: string; credits: number; tx_id: string; confirmed: boolean }[];
}

export interface AssignmentResult {
  tx_id: string;
  confirmed: boolean;
  tx?: TxView;
}

export class RegistrarFlow {
  constructor(
    private readonly api: NodeApi,
    private readonly adminKey: KeyMaterial,
  ) {}

  async lookupStudent(studentId: string): Promise<StudentSummary> {
    const doc = await this.api.postChannel<{ student: StudentSummary }>(
      "student_lookup",
      { student_id: studentId },
      this.adminKey,
    );
    return doc.student;
  }

  async registerStudent(studentId: string) {
    return this.api.registerStudent(studentId, this.adminKey);
  }

  /** Integer credits only; the form blocks anything else before it gets here. */
  async assignCredits(
    studentId: string,
    courseId: string,
    credits: number,
    timeoutMs = 15000,
  ): Promise<AssignmentResult> {
    if (!Number.isInteger(credits) || credits < 1) {
      throw new ApiError("NonIntegerCredit", 0, `credits must be a whole number, got ${credits}`);
    }
    const submitted = await this.api.postChannel<{ tx_id: string }>(
      "course_complete",
      { student_id: studentId, course_id: courseId, credits },
      this.adminKey,
    );
    const tx = await this.api.waitFor(
      () => this.api.transaction(submitted.tx_id),
      (view) => view.confirmed === true,
      timeoutMs,
    );
    return { tx_id: submitted.tx_id, confirmed: true, tx };
  }
}
