import { ApiError, ChatApi } from "./api.js";
import { systemTurn, userTurn } from "./view.js";
import { renderAttention, renderCandidateTable, renderError, renderTurn } from "./ui.js";

// Optional ?api=http://host:port override for when the page is served by
// a separate static server; same-origin by default.
const base = new URLSearchParams(window.location.search).get("api") ?? "";
const api = new ChatApi(base);

let sessionId: string | null = null;
let busy = false;

window.addEventListener("DOMContentLoaded", () => {
  const statusEl = document.getElementById("status")!;
  const messagesEl = document.getElementById("messages")!;
  const errorEl = document.getElementById("error")!;
  const formEl = document.getElementById("chat-form") as HTMLFormElement;
  const inputEl = document.getElementById("utterance") as HTMLInputElement;
  const sendEl = document.getElementById("send") as HTMLButtonElement;
  const topicEl = document.getElementById("topic") as HTMLInputElement;
  const newSessionEl = document.getElementById("new-session") as HTMLButtonElement;
  const debugToggleEl = document.getElementById("debug-toggle") as HTMLInputElement;
  const debugPanelEl = document.getElementById("debug-panel")!;
  const candidatesEl = document.getElementById("candidates")!;
  const attentionEl = document.getElementById("attention")!;

  function showError(message: string) {
    errorEl.innerHTML = renderError(message);
  }

  function clearError() {
    errorEl.innerHTML = "";
  }

  function setBusy(value: boolean) {
    busy = value;
    inputEl.disabled = value;
    sendEl.disabled = value;
  }

  function appendTurn(html: string) {
    messagesEl.insertAdjacentHTML("beforeend", html);
    messagesEl.scrollTop = messagesEl.scrollHeight;
  }

  async function ensureSession(): Promise<string> {
    if (sessionId !== null) return sessionId;
    const topic = topicEl.value.trim();
    const reply = await api.createSession(topic || undefined);
    sessionId = reply.session_id;
    topicEl.value = reply.topic_id;
    return sessionId;
  }

  async function startSession() {
    clearError();
    sessionId = null;
    messagesEl.innerHTML = "";
    candidatesEl.innerHTML = "";
    attentionEl.innerHTML = "";
    try {
      await ensureSession();
      statusEl.textContent = `session on "${topicEl.value}"`;
      inputEl.focus();
    } catch (err) {
      showError(err instanceof ApiError ? err.message : String(err));
    }
  }

  async function send(utterance: string) {
    clearError();
    setBusy(true);
    appendTurn(renderTurn(userTurn(utterance)));
    try {
      const sid = await ensureSession();
      const reply = await api.chat(sid, utterance, debugToggleEl.checked);
      appendTurn(renderTurn(systemTurn(reply)));
      if (reply.candidates) candidatesEl.innerHTML = renderCandidateTable(reply.candidates);
      if (reply.attention) attentionEl.innerHTML = renderAttention(reply.attention);
    } catch (err) {
      showError(err instanceof ApiError ? err.message : String(err));
    } finally {
      setBusy(false);
      inputEl.focus();
    }
  }

  formEl.addEventListener("submit", (event) => {
    event.preventDefault();
    const utterance = inputEl.value.trim();
    if (!utterance || busy) return; // one request in flight, ever
    inputEl.value = "";
    void send(utterance);
  });

  newSessionEl.addEventListener("click", () => void startSession());

  debugToggleEl.addEventListener("change", () => {
    debugPanelEl.hidden = !debugToggleEl.checked;
  });
  debugPanelEl.hidden = !debugToggleEl.checked;

  api
    .health()
    .then((h) => {
      statusEl.textContent = `service ok, model ${h.model_version}`;
    })
    .catch((err) => {
      statusEl.textContent = "service unreachable";
      showError(err instanceof ApiError ? err.message : String(err));
    });
});
