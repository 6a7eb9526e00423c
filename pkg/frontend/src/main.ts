import { startApp } from "./app.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("api") ?? "http://127.0.0.1:8787";
const sessionId = params.get("session") ?? "default";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app container");

startApp(base, sessionId, root).catch((error) => {
  root.textContent = `failed to start: ${error}`;
});
