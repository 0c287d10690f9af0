import { Client } from "./api.js";
import { mountConsole } from "./app.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("api") ?? window.location.origin;
const root = document.getElementById("app");
if (root === null) throw new Error("page has no #app element");
mountConsole(root, { client: new Client(base) });
