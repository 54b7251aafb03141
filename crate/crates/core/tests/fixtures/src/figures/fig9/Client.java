package fig9;

import java.io.IOException;
import java.io.OutputStream;
import java.net.Socket;

public class Client {
  public void call(Message m) throws IOException {
    Socket socket = new Socket("service.example", 8080);
    OutputStream out = socket.getOutputStream();
    out.write(m.getBody());
    socket.close();
  }
}
