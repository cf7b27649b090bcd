// Wallet and explorer single-page app: four role tabs over the typed flows.
// All network work is async with visible pending banners; token amounts are
// rendered exactly as the API strings them.

import { NodeApi } from "../api.js";
import { ExplorerFlow } from "../flows/explorer.js";
import { RegistrarFlow } from "../flows/registrar.js";
import { StudentFlow } from "../flows/student.js";
import { VerifierFlow } from "../flows/verifier.js";
import { ApiError, type KeyMaterial, type ProofPackage } from "../types.js";
import { banner, clear, el, row, shortHash, table } from "./render.js";

const DEFAULT_NODE = "http://127.0.0.1:8108";

interface AppState {
  api: NodeApi;
  explorer: ExplorerFlow;
  student: StudentFlow;
  verifier: VerifierFlow;
  registrar: RegistrarFlow | null;
}

function errorText(error: unknown): string {
  if (error instanceof ApiError) return error.message;
  return String(error);
}

function section(title: string, ...children: (Node | string)[]): HTMLElement {
  return el("section", {}, [el("h2", {}, [title]), ...children]);
}

function labeled(label: string, input: HTMLElement): HTMLElement {
  return el("label", {}, [label, input]);
}

export function mountApp(root: HTMLElement, nodeUrl = DEFAULT_NODE): AppState {
  const api = new NodeApi(nodeUrl);
  const state: AppState = {
    api,
    explorer: new ExplorerFlow(api),
    student: new StudentFlow(api),
    verifier: new VerifierFlow(api),
    registrar: null,
  };

  const tabs = el("nav", { class: "tabs" });
  const body = el("main", {});
  root.append(el("h1", {}, ["EduCTX wallet"]), tabs, body);

  const views: Record<string, () => HTMLElement> = {
    Explorer: () => explorerView(state),
    Registrar: () => registrarView(state),
    Student: () => studentView(state),
    Verifier: () => verifierView(state),
  };
  for (const name of Object.keys(views)) {
    const button = el("button", { type: "button" }, [name]);
    button.addEventListener("click", () => {
      clear(body).append(views[name]());
    });
    tabs.append(button);
  }
  clear(body).append(views.Explorer());
  return state;
}

// -- explorer -------------------------------------------------------------------

function explorerView(state: AppState): HTMLElement {
  const status = el("div", { class: "status" });
  const blockList = el("div", {});
  const detail = el("div", {});
  const view = section("Chain explorer", status, blockList, detail);

  const refresh = async () => {
    try {
      const page = await state.explorer.latestBlocks(10);
      const rows = page.blocks.map((block) => {
        const link = el("a", { href: "#" }, [shortHash(block.hash)]);
        link.addEventListener("click", async (event) => {
          event.preventDefault();
          const full = await state.explorer.blockDetail(block.hash);
          clear(detail).append(
            el("h3", {}, [`Block ${full.height}`]),
            table(
              ["tx", "kind", "from", "to", "amount", "course"],
              full.transactions.map((tx) =>
                row([
                  shortHash(tx.id),
                  tx.kind,
                  shortHash(tx.sender),
                  shortHash(tx.recipient),
                  tx.amount,
                  tx.course_id,
                ]),
              ),
            ),
          );
        });
        return row([
          String(block.height),
          link,
          String(block.transactions.length),
          String(block.timestamp),
        ]);
      });
      clear(blockList).append(table(["height", "hash", "txs", "slot"], rows));
    } catch (error) {
      clear(blockList).append(banner("error", errorText(error)));
    }
    try {
      const delegates = await state.explorer.delegates();
      blockList.append(
        el("h3", {}, ["Delegates"]),
        table(
          ["name", "weight", "active"],
          delegates.map((d) => row([d.name, d.vote_weight, d.active ? "yes" : "no"])),
        ),
      );
    } catch {
      // roster unavailable; block list already reported the error
    }
  };

  state.explorer.pollStatus((doc) => {
    clear(status).append(
      banner("ok", `height ${doc.height} · tick ${doc.tick} · head ${shortHash(doc.head)}`),
    );
  });
  void refresh();
  const reload = el("button", { type: "button" }, ["Refresh blocks"]);
  reload.addEventListener("click", () => void refresh());
  view.append(reload);
  return view;
}

// -- registrar -------------------------------------------------------------------

function registrarView(state: AppState): HTMLElement {
  const keyInput = el("textarea", { rows: "3", placeholder: '{"private_key": …}' });
  const unlock = el("button", { type: "button" }, ["Unlock registrar key"]);
  const status = el("div", {});

  const studentInput = el("input", { placeholder: "student id" });
  const courseInput = el("input", { placeholder: "course id" });
  const creditsInput = el("input", { type: "number", step: "1", min: "1" });
  const assign = el("button", { type: "button", disabled: "true" }, ["Assign credits"]);
  const result = el("div", {});

  unlock.addEventListener("click", () => {
    try {
      const key = JSON.parse(keyInput.value) as KeyMaterial;
      state.registrar = new RegistrarFlow(state.api, key);
      assign.removeAttribute("disabled");
      clear(status).append(banner("ok", "registrar key loaded (kept in this tab only)"));
    } catch (error) {
      clear(status).append(banner("error", errorText(error)));
    }
  });

  assign.addEventListener("click", async () => {
    if (!state.registrar) return;
    const credits = Number(creditsInput.value);
    if (!Number.isInteger(credits) || credits < 1) {
      clear(result).append(banner("error", "credits must be a whole number"));
      return;
    }
    clear(result).append(banner("pending", "submitting and waiting for confirmation…"));
    try {
      const outcome = await state.registrar.assignCredits(
        studentInput.value.trim(),
        courseInput.value.trim(),
        credits,
      );
      clear(result).append(
        banner("ok", `confirmed in block ${outcome.tx?.height}: tx ${shortHash(outcome.tx_id)}`),
      );
    } catch (error) {
      clear(result).append(banner("error", errorText(error)));
    }
  });

  return section(
    "Assign course credits",
    labeled("Registrar key file contents", keyInput),
    unlock,
    status,
    labeled("Student", studentInput),
    labeled("Course", courseInput),
    labeled("Credits (whole number)", creditsInput),
    assign,
    result,
  );
}

// -- student ---------------------------------------------------------------------

function studentView(state: AppState): HTMLElement {
  const packetInput = el("textarea", { rows: "4", placeholder: "paste wallet packet JSON" });
  const importButton = el("button", { type: "button" }, ["Import wallet"]);
  const summary = el("div", {});
  const history = el("div", {});
  const challengeInput = el("input", { placeholder: "challenge text" });
  const signButton = el("button", { type: "button" }, ["Sign challenge"]);
  const answerButton = el("button", { type: "button" }, ["Answer pending challenges"]);
  const signature = el("div", {});

  const refresh = async () => {
    try {
      const account = await state.student.accountView();
      clear(summary).append(
        banner("ok", `${account.address} · ${account.balance} ECTX · ${account.credits} credits`),
      );
      clear(history).append(
        table(
          ["institution", "course", "amount", "tx"],
          account.credit_breakdown.map((entry) =>
            row([entry.hei_name, entry.course_id, entry.amount, shortHash(entry.tx_id)]),
          ),
        ),
      );
    } catch (error) {
      clear(summary).append(banner("error", errorText(error)));
    }
  };

  importButton.addEventListener("click", () => {
    try {
      state.student.importPacket(packetInput.value);
      void refresh();
    } catch (error) {
      clear(summary).append(banner("error", errorText(error)));
    }
  });

  signButton.addEventListener("click", async () => {
    try {
      const hex = await state.student.signChallenge(challengeInput.value);
      clear(signature).append(el("code", {}, [hex]));
    } catch (error) {
      clear(signature).append(banner("error", errorText(error)));
    }
  });

  answerButton.addEventListener("click", async () => {
    try {
      const sessions = await state.student.answerInboxChallenges();
      clear(signature).append(
        banner("ok", sessions.length ? `answered: ${sessions.join(", ")}` : "inbox empty"),
      );
    } catch (error) {
      clear(signature).append(banner("error", errorText(error)));
    }
  });

  return section(
    "Student wallet",
    labeled("Wallet packet", packetInput),
    importButton,
    summary,
    history,
    labeled("Challenge", challengeInput),
    signButton,
    answerButton,
    signature,
  );
}

// -- verifier ---------------------------------------------------------------------

function verifierView(state: AppState): HTMLElement {
  const proofInput = el("textarea", { rows: "4", placeholder: "paste proof package JSON" });
  const startButton = el("button", { type: "button" }, ["Check proof"]);
  const progress = el("div", {});
  const responseInput = el("textarea", { rows: "2", placeholder: "signed response (hex)" });
  const submitButton = el("button", { type: "button", disabled: "true" }, ["Submit response"]);
  let sessionId = "";

  startButton.addEventListener("click", async () => {
    clear(progress).append(banner("pending", "checking script and balance…"));
    try {
      const proof = JSON.parse(proofInput.value) as ProofPackage;
      const session = await state.verifier.start(proof);
      sessionId = session.session_id;
      if (session.phase === "rejected") {
        clear(progress).append(banner("error", session.error ?? "rejected"));
        return;
      }
      submitButton.removeAttribute("disabled");
      clear(progress).append(
        banner("ok", `balance ${session.balance} ECTX (${session.credits} credits)`),
        el("p", {}, [
          "challenge sent to the student; it is also here for out-of-band delivery: ",
          el("code", {}, [session.challenge_message ?? ""]),
        ]),
      );
      const verdict = await state.verifier.awaitVerdict(sessionId);
      progress.append(
        verdict.phase === "verified"
          ? banner("ok", `verified · ${verdict.credits} credits`)
          : banner("error", `${verdict.phase}: ${verdict.error ?? ""}`),
      );
    } catch (error) {
      clear(progress).append(banner("error", errorText(error)));
    }
  });

  submitButton.addEventListener("click", async () => {
    try {
      const session = await state.verifier.submitSignedResponse(
        sessionId,
        responseInput.value.trim(),
      );
      progress.append(
        session.phase === "verified"
          ? banner("ok", `verified · ${session.credits} credits`)
          : banner("error", `${session.phase}: ${session.error ?? ""}`),
      );
    } catch (error) {
      progress.append(banner("error", errorText(error)));
    }
  });

  return section(
    "Verify a credit record",
    labeled("Proof package", proofInput),
    startButton,
    progress,
    labeled("Signed response (if delivered out of band)", responseInput),
    submitButton,
  );
}

declare global {
  interface Window {
    eductxMount?: typeof mountApp;
  }
}

if (typeof window !== "undefined") {
  window.eductxMount = mountApp;
  const root = document.getElementById("app");
  if (root) {
    const url = new URLSearchParams(window.location.search).get("node") ?? DEFAULT_NODE;
    mountApp(root, url);
  }
}
